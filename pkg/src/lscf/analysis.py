"""Landscape spectral predictors, the semiclassical multiplier ``M_sc``, and ε-sweeps.

The sweep helpers build a complete system (grid, potential, dopant, β, V_cut)
from a :class:`SystemSpec`, so that every point of a sweep is reproducible from
the spec and its seed alone.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .density import MODELS, DensityMap, EigenSolveConfig, fermi_dirac
from .errors import LscfError, NoBracket, NoConvergence, QuadratureFailure, TooLarge
from .grid import GridSpec, build_grid, laplacian_matrix, lp_norm, sobolev_norm
from .landscape import DENSE_LIMIT, derivative_norms, local_minima, solve_landscape
from .potential import gen_dopant, gen_pw_potential, realize_on_grid, select_vcut
from .scf import ScfOptions, ScfState, scf_solve

log = logging.getLogger(__name__)

# Volume of the unit ball in R^d.
BALL_VOLUME = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


# ---------------------------------------------------------------------------
# spectral predictors


def predict_eigenvalues(W, d: int | None = None, count: int = 10) -> list[float]:
    """``(1 + d/4)·W_i`` over the ``count`` smallest strict local minima of ``W``.

    Fewer values are returned when ``W`` has fewer local minima.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    W = np.asarray(W, dtype=float)
    d = W.ndim if d is None else d
    return [(1.0 + d / 4.0) * w for w, _ in local_minima(W)[:count]]


def exact_eigenvalues(grid: GridSpec, v_eff, count: int, scheme: str = "stencil2") -> np.ndarray:
    """Lowest ``count`` eigenvalues of ``-ε²Δ + v_eff``, ascending.

    Dense up to ``DENSE_LIMIT`` unknowns; shift-invert Lanczos for the sparse
    stencil beyond that.
    """
    v = grid.check(v_eff, "v_eff")
    count = min(int(count), grid.size)
    if grid.size <= DENSE_LIMIT:
        H = grid.eps**2 * laplacian_matrix(grid, scheme)
        H[np.diag_indices_from(H)] += v.ravel()
        return sla.eigvalsh(H, subset_by_index=[0, count - 1])
    if scheme != "stencil2":
        raise TooLarge(f"spectral-scheme eigenvalues need n^d <= {DENSE_LIMIT}")
    import scipy.sparse as sp

    H = (grid.eps**2 * laplacian_matrix(grid, scheme, sparse=True) + sp.diags(v.ravel())).tocsc()
    sigma = float(v.min()) - 1e-3 * max(1.0, abs(float(v.min())))
    try:
        lam = spla.eigsh(H, k=count, sigma=sigma, which="LM", return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(f"Lanczos did not converge for {count} eigenvalues") from exc
    return np.sort(lam)


def counting_function_landscape(grid: GridSpec, W, E) -> np.ndarray | float:
    """Phase-space count ``(2πε)^{-d} |{(x, p): p² + W(x) ≤ E}|``.

    Uses the closed radial form ``(2πε)^{-d} ω_d Σ_x max(0, E - W(x))^{d/2} h^d``.
    ``E`` may be a scalar or an array.
    """
    W = grid.check(W, "W").ravel()
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    gap = np.maximum(0.0, E_arr[:, None] - W[None, :])
    vals = BALL_VOLUME[grid.d] / (2.0 * math.pi * grid.eps) ** grid.d * np.sum(gap ** (grid.d / 2.0), axis=1) * grid.dv
    return vals if np.ndim(E) else float(vals[0])


@dataclass
class CountingTable:
    """Rows ``(E, N_exact, N_landscape, N_bare_weyl)``."""

    E: np.ndarray
    exact: np.ndarray
    landscape: np.ndarray
    bare_weyl: np.ndarray

    def rows(self):
        return list(zip(self.E.tolist(), self.exact.tolist(), self.landscape.tolist(), self.bare_weyl.tolist()))

    def mean_relative_errors(self) -> tuple[float, float]:
        """Mean ``|N_pred - N_exact| / N_exact`` over rows with ``N_exact > 0``."""
        mask = self.exact > 0
        if not mask.any():
            return math.nan, math.nan
        ex = self.exact[mask]
        return (float(np.mean(np.abs(self.landscape[mask] - ex) / ex)),
                float(np.mean(np.abs(self.bare_weyl[mask] - ex) / ex)))


def compare_counting(grid: GridSpec, V, phi, E_list, scheme: str = "stencil2") -> CountingTable:
    """Exact eigenvalue counts against the landscape and bare Weyl predictions.

    The landscape prediction uses ``W = 1/u`` from ``(-ε²Δ + V - φ)u = 1``; the
    bare Weyl law uses ``V - φ`` in its place.
    """
    if grid.size > DENSE_LIMIT:
        raise TooLarge(f"counting comparison needs n^d <= {DENSE_LIMIT}")
    v_eff = grid.check(V, "V") - grid.check(phi, "phi")
    E = np.sort(np.asarray(E_list, dtype=float))
    lam = exact_eigenvalues(grid, v_eff, grid.size, scheme)
    exact = np.searchsorted(lam, E, side="right").astype(float)
    W = solve_landscape(grid, v_eff, tol=1e-12, scheme=scheme).W
    return CountingTable(E, exact, counting_function_landscape(grid, W, E), counting_function_landscape(grid, v_eff, E))


# ---------------------------------------------------------------------------
# M_sc and its lower bound


def multiplier_G(x):
    """``G(x) = x log|(x+1)/(x-1)|``; nonnegative, ``G(1) = +∞``, ``G(∞) = 2``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.log(np.abs((x + 1.0) / (x - 1.0)))
        big = x > 1e4
        # Series 2 + 2/(3x²) avoids cancellation in the log for large x.
        out = np.where(big, 2.0 + 2.0 / (3.0 * np.where(big, x, 1.0) ** 2), out)
    return out if out.ndim else float(out)


def _t_cutoff(a_min: float, beta: float) -> float:
    return math.sqrt(max(0.0, -a_min) + 40.0 / beta)


def _shell_profile(s_sing, A, beta, s_max, tol):
    """``∫_0^{s_max} G(s/s_sing) f_FD(β(s² + A)) ds`` for each entry of ``A``.

    ``s_sing = |εk|/2`` locates the log singularity; ``s_sing = 0`` is the
    zero mode where ``G ≡ 2``.
    """
    if s_sing == 0.0:
        kern = lambda s: 2.0 * fermi_dirac(beta * (s * s + A))  # noqa: E731
    else:
        kern = lambda s: multiplier_G(s / s_sing) * fermi_dirac(beta * (s * s + A))  # noqa: E731
    points = [s_sing] if 0.0 < s_sing < s_max else None
    # Fermi edges sharpen the integrand; hand them to the adaptive rule as breakpoints.
    edges = np.sqrt(-A[A < 0]) if np.any(A < 0) else np.empty(0)
    if edges.size:
        extra = np.unique(np.round(edges[(edges > 0) & (edges < s_max)], 12))
        if extra.size <= 16:
            points = sorted(set((points or []) + extra.tolist()))
    val, err = si.quad_vec(kern, 0.0, s_max, epsrel=tol, epsabs=0.0, points=points, limit=4000)
    scale = float(np.max(np.abs(val))) if np.size(val) else 0.0
    if not np.all(np.isfinite(val)) or err > 10 * tol * max(scale, 1e-300):
        raise QuadratureFailure(f"M_sc shell integral did not reach rtol={tol:g} (error {err:.2e})")
    return val


def msc_apply(grid: GridSpec, W, phi0, v_cut: float, mu: float, beta: float, f, tol: float = 1e-8) -> np.ndarray:
    """Apply the semiclassical multiplier operator ``M_sc`` to ``f``.

    ``M_sc f = (8π²ε³)^{-1} ∫_0^∞ f_FD(β(t + A)) [K_t f] dt`` with
    ``A = W + V_cut - φ₀ - μ`` and ``K_t`` the Fourier multiplier
    ``|εk|^{-1} log|(√(4t) + |εk|)/(√(4t) - |εk|)|`` (``1/√t`` at ``k = 0``).

    After ``t = s²`` the integrand of each Fourier shell ``|k|`` is
    ``G(2s/|εk|) f_FD(β(s² + A))``.  The integral is computed per shell by
    adaptive Gauss–Kronrod with a breakpoint at the singularity ``s = |εk|/2``,
    and the weight is applied pointwise after the multiplier.
    """
    W = grid.check(W, "W")
    phi0 = grid.check(phi0, "phi0")
    f = grid.check(f, "f")
    A = (W + v_cut - phi0 - mu).ravel()
    if A.min() <= 0:
        warnings.warn("min(W - φ₀ + V_cut - μ) <= 0: M_sc weight is not exponentially small", RuntimeWarning,
                      stacklevel=2)
    s_max = _t_cutoff(float(A.min()), beta)
    kmag = np.sqrt(grid.k2)
    shells, inverse = np.unique(np.round(kmag, 10), return_inverse=True)
    inverse = inverse.reshape(grid.shape)
    fhat = np.fft.fftn(f)
    out = np.zeros(grid.size)
    for i, k in enumerate(shells):
        mask = inverse == i
        part = np.fft.ifftn(np.where(mask, fhat, 0.0)).real.ravel()
        if not np.any(part):
            continue
        out += _shell_profile(0.5 * grid.eps * k, A, beta, s_max, tol) * part
    return (out / (8.0 * math.pi**2 * grid.eps**3)).reshape(grid.shape)


def msc_lower_bound_lhs(k_mag: float, beta: float, eps: float, tol: float = 1e-10) -> float:
    """``∫_0^∞ e^{-βs²} G(2s/(εk)) ds``; equals ``√(π/β)`` at ``k = 0``."""
    if k_mag < 0:
        raise ValueError(f"k_mag must be non-negative, got {k_mag}")
    if k_mag == 0:
        return math.sqrt(math.pi / beta)
    s0 = 0.5 * eps * k_mag
    s_max = math.sqrt(45.0 / beta)
    kern = lambda s: math.exp(-beta * s * s) * float(multiplier_G(s / s0))  # noqa: E731
    pieces = [(0.0, min(s0, s_max))]
    if s0 < s_max:
        pieces.append((s0, s_max))
    total = err = 0.0
    for lo, hi in pieces:
        val, e = si.quad(kern, lo, hi, epsrel=tol * 0.1, epsabs=0.0, limit=500)
        total += val
        err += e
    if not math.isfinite(total) or err > tol * abs(total):
        raise QuadratureFailure(f"lower-bound quadrature error {err:.2e} exceeds rtol={tol:g}")
    return total


def check_msc_lower_bound(k_mag: float, beta: float, eps: float, tol: float = 1e-10):
    """Per-mode lower bound ``lhs ≥ 1/(2√β(1 + βε²k²))``.

    Returns:
        ``(lhs, rhs, passed)`` with ``passed = lhs ≥ rhs·(1 - 1e-8)``.
    """
    lhs = msc_lower_bound_lhs(k_mag, beta, eps, tol)
    rhs = 1.0 / (2.0 * math.sqrt(beta) * (1.0 + beta * eps**2 * k_mag**2))
    return lhs, rhs, bool(lhs >= rhs * (1.0 - 1e-8))


# ---------------------------------------------------------------------------
# systems and sweeps


@dataclass(frozen=True)
class SystemSpec:
    """Everything needed to rebuild one test system deterministically.

    ``beta`` overrides the coupling ``β = log(ε^{-3})/τ``; ``tau`` defaults to
    ``(K + v_min)/2``.  ``n`` defaults to 16 points per unit cell.  ``v_cut``
    overrides ``V_min - c_cut δ^{1/4}``; a constant potential (``δ = 0``)
    without an override uses ``V_min - 0.2``.
    """

    d: int = 1
    L: int = 8
    n: int | None = None
    eps: float = 0.02
    seed: int = 1
    v_min: float = 1.0
    delta: float = 0.1
    kappa0: float = 1.0
    dopant_amplitude: float = 0.0
    c_cut: float = 1.0
    K: float = 0.3
    tau: float | None = None
    beta: float | None = None
    v_cut: float | None = None
    scheme: str = "spectral"

    @property
    def tau_value(self) -> float:
        return 0.5 * (self.K + self.v_min) if self.tau is None else self.tau

    def beta_for(self, eps: float) -> float:
        if self.beta is not None:
            return float(self.beta)
        return math.log(eps**-3) / self.tau_value

    def hash(self) -> str:
        return config_hash(asdict(self))


def config_hash(obj) -> str:
    """SHA-256 of the canonical JSON encoding of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class System:
    spec: SystemSpec
    grid: GridSpec
    V: np.ndarray
    kappa: np.ndarray
    beta: float
    v_cut: float


def build_system(spec: SystemSpec) -> System:
    """Grid, potential, dopant, ``β`` and ``V_cut`` for ``spec``."""
    n = 16 * spec.L if spec.n is None else spec.n
    grid = build_grid(spec.d, spec.L, n, spec.eps)
    pw = gen_pw_potential(spec.seed, spec.L, spec.d, spec.v_min, spec.delta)
    V = realize_on_grid(pw, grid)
    kappa = gen_dopant(grid, spec.kappa0, spec.dopant_amplitude, spec.seed)
    if spec.v_cut is not None:
        v_cut = spec.v_cut
    elif spec.delta > 0:
        v_cut = select_vcut(V, spec.c_cut)
    else:
        v_cut = spec.v_min - 0.2
    return System(spec, grid, V, kappa, spec.beta_for(spec.eps), v_cut)


def solve_system(system: System, model: str, opts: ScfOptions | None = None,
                 eig: EigenSolveConfig | None = None) -> ScfState:
    return scf_solve(model, system.grid, system.V, system.kappa, system.beta, system.v_cut, opts,
                     system.spec.scheme, eig)


def compare_states(a: ScfState, b: ScfState) -> dict[str, float]:
    """Cross-model distances ``‖φ_a - φ_b‖_{H²}``, ``‖ρ_a - ρ_b‖₂`` and ``|μ_a - μ_b|``."""
    grid = a.grid
    return {
        "phi_h2": sobolev_norm(grid, a.phi - b.phi, 2),
        "rho_l2": lp_norm(grid, a.rho - b.rho, 2),
        "mu": abs(a.mu - b.mu),
    }


METRICS = ("phi_h2", "rho_l2", "grad_w", "lap_w")


@dataclass
class SweepResult:
    """Rows ``(value, metric, metric value)`` plus least-squares log-log fits."""

    variable: str
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    seed: int = 0
    config_hash: str = ""

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        pts = sorted((x, y) for x, m, y in self.rows if m == metric)
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    def slope(self, metric: str) -> float:
        return self.fits[metric][0]


def fit_loglog(x, y) -> tuple[float, float]:
    """Least-squares ``log y = slope·log x + intercept``."""
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def epsilon_sweep(spec: SystemSpec, eps_list, metrics=METRICS, models=("rehf", "lsc"),
                  opts: ScfOptions | None = None, eig: EigenSolveConfig | None = None,
                  fit_floor: float = 1e-6) -> SweepResult:
    """Solve the system at each ε and fit log-log slopes of the requested metrics.

    Cross-model metrics (``phi_h2``, ``rho_l2``) compare ``models[0]`` with
    ``models[1]``; the landscape metrics use ``W`` of ``V - V_cut``.  A point
    whose solve fails is flagged in ``failures`` and skipped.  A metric is fitted
    only with at least three positive values, and not when every value is below
    ``fit_floor`` (the models then coincide and the slope is meaningless).
    """
    eps_list = sorted(float(e) for e in eps_list)
    if len(eps_list) < 3:
        raise ValueError("an epsilon sweep needs at least 3 values")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}; expected a subset of {METRICS}")
    for m in models:
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}")
    result = SweepResult("eps", seed=spec.seed, config_hash=spec.hash())
    cross = [m for m in metrics if m in ("phi_h2", "rho_l2")]
    for eps in eps_list:
        system = build_system(replace(spec, eps=eps))
        if "grad_w" in metrics or "lap_w" in metrics:
            W = DensityMap("lsc", system.grid, system.V, system.beta, system.v_cut, spec.scheme).W2
            g, lap = derivative_norms(system.grid, W, 2)
            if "grad_w" in metrics:
                result.rows.append((eps, "grad_w", g))
            if "lap_w" in metrics:
                result.rows.append((eps, "lap_w", lap))
        if not cross:
            continue
        try:
            states = [solve_system(system, m, opts, eig) for m in models[:2]]
        except (NoConvergence, NoBracket, LscfError, ArithmeticError) as exc:
            log.warning("sweep point eps=%g failed: %s", eps, exc)
            result.failures[eps] = f"{type(exc).__name__}: {exc}"
            continue
        diff = compare_states(*states)
        for m in cross:
            result.rows.append((eps, m, diff[m]))
    for m in metrics:
        x, y = result.series(m)
        ok = y > 0
        if ok.sum() >= 3 and np.max(y) >= fit_floor:
            result.fits[m] = fit_loglog(x[ok], y[ok])
    return result


def monotone_within(values, slack: float = 0.1) -> bool:
    """True when ``values`` never increase by more than ``slack`` relative."""
    v = np.asarray(values, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] * (1.0 + slack)))


__all__ = [
    "BALL_VOLUME", "CountingTable", "METRICS", "SweepResult", "System", "SystemSpec", "build_system",
    "check_msc_lower_bound", "compare_counting", "compare_states", "config_hash", "counting_function_landscape",
    "epsilon_sweep", "exact_eigenvalues", "fit_loglog", "monotone_within", "msc_apply", "msc_lower_bound_lhs",
    "multiplier_G", "predict_eigenvalues", "solve_system",
]
