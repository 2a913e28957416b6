"""Fermi–Dirac utilities and the three density maps ``F(φ, μ)``.

* ``rehf``: ``den f_FD(β(-ε²Δ + V - φ - μ))`` from the eigenpairs of the
  periodic grid Hamiltonian.
* ``pl``: the momentum integral evaluated at ``W₁ + V_cut - μ`` where ``W₁`` is
  the landscape potential of ``V - φ - V_cut``.
* ``lsc``: the momentum integral at ``W₂ - φ + V_cut - μ`` where ``W₂`` is the
  (φ-independent) landscape potential of ``V - V_cut``.

The momentum integral is ``(2πε)^{-d} ∫_{R^d} f_FD(β(p² + a)) dp``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, QuadratureFailure, TooLarge
from .grid import GridSpec, laplacian_apply, laplacian_matrix
from .landscape import solve_landscape
from .potential import rng

MODELS = ("rehf", "pl", "lsc")

# Surface area of the unit sphere S^{d-1}.
SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}

_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


def fermi_dirac(x):
    """``1/(1 + e^x)`` without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = np.where(x > 0, e / (1.0 + e), 1.0 / (1.0 + e))
    return out if out.ndim else float(out)


def fermi_dirac_deriv(x):
    """``f_FD'(x) = -f(x)(1 - f(x))``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = -e / (1.0 + e) ** 2
    return out if out.ndim else float(out)


def _radial_integral(a, beta, d, kernel, tol, max_panels=1 << 13):
    """``∫_0^∞ q^{d-1} kernel(β(q² + a)) dq`` for each entry of ``a``.

    Composite Gauss–Legendre on ``[0, s] ∪ [s, q_max]`` with
    ``q_max = sqrt(max(0, -a) + 40/β)`` and ``s`` the Fermi edge when ``a < 0``.
    Panels are doubled per entry until successive estimates agree to ``tol``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    flat = a.ravel()
    qmax = np.sqrt(np.maximum(0.0, -flat) + 40.0 / beta)
    split = np.where(flat < 0, np.sqrt(np.maximum(-flat, 0.0)), 0.5 * qmax)
    segments = [(np.zeros_like(flat), split), (split, qmax)]

    def estimate(idx, m):
        total = np.zeros(idx.size)
        t = (np.arange(m)[:, None] + 0.5 * (_GL_NODES[None, :] + 1.0)) / m  # (m, order) in [0, 1]
        w = np.broadcast_to(_GL_WEIGHTS / (2.0 * m), t.shape).ravel()
        t = t.ravel()
        for lo, hi in segments:
            lo, hi = lo[idx, None], hi[idx, None]
            q = lo + (hi - lo) * t[None, :]
            vals = q ** (d - 1) * kernel(beta * (q * q + flat[idx, None]))
            total += (hi[:, 0] - lo[:, 0]) * (vals @ w)
        return total

    result = np.empty_like(flat)
    todo = np.arange(flat.size)
    m = 4
    prev = estimate(todo, m)
    while todo.size:
        m *= 2
        if m > max_panels:
            raise QuadratureFailure(f"radial quadrature did not reach rtol={tol:g} with {max_panels} panels")
        cur = estimate(todo, m)
        done = np.abs(cur - prev) <= tol * np.abs(cur) + 1e-300
        result[todo[done]] = cur[done]
        todo, prev = todo[~done], cur[~done]
    return result.reshape(a.shape)


def _prefactor(eps, d):
    return SPHERE_AREA[d] / (2.0 * math.pi * eps) ** d


def fermi_integral(a, beta: float, eps: float, d: int, tol: float = 1e-10):
    """``(2πε)^{-d} ∫_{R^d} f_FD(β(p² + a)) dp`` (vectorized over ``a``)."""
    out = _prefactor(eps, d) * _radial_integral(a, beta, d, fermi_dirac, tol)
    return out if np.ndim(a) else float(out[0])


def fermi_integral_deriv(a, beta: float, eps: float, d: int, tol: float = 1e-10):
    """``∂/∂a`` of :func:`fermi_integral`; always negative."""
    out = beta * _prefactor(eps, d) * _radial_integral(a, beta, d, fermi_dirac_deriv, tol)
    return out if np.ndim(a) else float(out[0])


@dataclass(frozen=True)
class ThermoState:
    beta: float
    mu: float
    v_cut: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class EigenSolveConfig:
    """Eigensolver selection for the REHF density.

    ``method`` is ``"auto"`` (dense up to ``dense_limit`` unknowns, Lanczos
    beyond), ``"dense"`` or ``"lanczos"``.  ``kpoints`` > 1 averages over a
    uniform grid of Bloch shifts per axis (dense path only).
    """

    method: str = "auto"
    max_pairs: int = 4096
    tail_tol: float = 1e-12
    dense_limit: int = 4096
    kpoints: int = 1

    def __post_init__(self):
        if self.method not in ("auto", "dense", "lanczos"):
            raise ValueError(f"unknown eigensolver method {self.method!r}")
        if not 0 < self.tail_tol < 1:
            raise ValueError("tail_tol must lie in (0, 1)")


@dataclass
class RehfSpectrum:
    """Eigenvalues and grid densities ``|ψ_i(x)|²`` (normalized ``Σ|ψ|²h^d = 1``)."""

    values: list  # per Bloch shift, ascending
    densities: list  # per Bloch shift, shape (n^d, nstates)
    shape: tuple

    def density(self, beta: float, mu: float) -> np.ndarray:
        rho = np.zeros(int(np.prod(self.shape)))
        for lam, dens in zip(self.values, self.densities):
            rho += dens @ fermi_dirac(beta * (lam - mu))
        return (rho / len(self.values)).reshape(self.shape)

    def density_dmu(self, beta: float, mu: float) -> np.ndarray:
        """``∂ρ/∂μ``."""
        rho = np.zeros(int(np.prod(self.shape)))
        for lam, dens in zip(self.values, self.densities):
            rho -= dens @ (beta * fermi_dirac_deriv(beta * (lam - mu)))
        return (rho / len(self.values)).reshape(self.shape)

    @property
    def lowest(self) -> float:
        return float(min(v[0] for v in self.values))

    @property
    def highest(self) -> float:
        return float(max(v[-1] for v in self.values))


def _bloch_shifts(grid: GridSpec, kpoints: int):
    base = 2.0 * np.pi / grid.L * (np.arange(kpoints) / kpoints)
    return [np.array(t) for t in np.array(np.meshgrid(*([base] * grid.d), indexing="ij")).reshape(grid.d, -1).T]


def _hamiltonian_dense(grid, v_eff, scheme, shift=None):
    H = grid.eps**2 * laplacian_matrix(grid, scheme, shift=shift)
    H[np.diag_indices_from(H)] += v_eff.ravel()
    return H


def _dense_spectrum(grid, v_eff, scheme, kpoints):
    values, densities = [], []
    shifts = [None] if kpoints == 1 else _bloch_shifts(grid, kpoints)
    for shift in shifts:
        lam, vec = np.linalg.eigh(_hamiltonian_dense(grid, v_eff, scheme, shift))
        values.append(lam)
        densities.append(np.abs(vec) ** 2 / grid.dv)
    return RehfSpectrum(values, densities, grid.shape)


def _lanczos_spectrum(grid, v_eff, scheme, cfg, beta, mu):
    N = grid.size
    eps2 = grid.eps**2
    v0 = rng(0, 99).standard_normal(N)
    if scheme == "stencil2":
        H = eps2 * laplacian_matrix(grid, scheme, sparse=True) + sp.diags(v_eff.ravel())
        H = H.tocsc()
        sigma = float(v_eff.min()) - 1e-3 * max(1.0, abs(float(v_eff.min())))
        kwargs = dict(sigma=sigma, which="LM")
    else:
        def matvec(x):
            x = x.reshape(grid.shape)
            return (eps2 * laplacian_apply(grid, x, scheme) + v_eff * x).ravel()

        H = spla.LinearOperator((N, N), matvec=matvec, dtype=float)
        kwargs = dict(which="SA")
    k = min(32, N - 2, cfg.max_pairs)
    while True:
        try:
            lam, vec = spla.eigsh(H, k=k, v0=v0, tol=0.0, **kwargs)
        except spla.ArpackNoConvergence as exc:
            raise NoConvergence(f"Lanczos failed for {k} pairs: {exc}") from exc
        order = np.argsort(lam)
        lam, vec = lam[order], vec[:, order]
        ground = fermi_dirac(beta * (lam[0] - mu))
        if fermi_dirac(beta * (lam[-1] - mu)) < cfg.tail_tol * ground:
            return RehfSpectrum([lam], [np.abs(vec) ** 2 / grid.dv], grid.shape)
        if k >= min(N - 2, cfg.max_pairs):
            return None
        k = min(2 * k, N - 2, cfg.max_pairs)


def rehf_spectrum(grid: GridSpec, v_eff, scheme: str = "stencil2", cfg: EigenSolveConfig | None = None,
                  beta: float | None = None, mu: float | None = None) -> RehfSpectrum:
    """Eigen-decomposition of ``-ε²Δ + v_eff`` used by the REHF density.

    The Lanczos path needs ``beta`` and ``mu`` for its Fermi-weight stopping
    rule; the spectrum it returns is accurate for any chemical potential up
    to ``mu``.
    """
    cfg = cfg or EigenSolveConfig()
    v_eff = grid.check(v_eff, "v_eff")
    dense_ok = grid.size <= cfg.dense_limit
    use_dense = cfg.method == "dense" or (cfg.method == "auto" and dense_ok) or cfg.kpoints > 1
    if use_dense:
        if not dense_ok:
            raise TooLarge(f"dense eigensolve limited to {cfg.dense_limit} unknowns, got {grid.size}")
        return _dense_spectrum(grid, v_eff, scheme, cfg.kpoints)
    if beta is None or mu is None:
        raise ValueError("the Lanczos path needs beta and mu for its stopping rule")
    spec = _lanczos_spectrum(grid, v_eff, scheme, cfg, beta, mu)
    if spec is None:
        if dense_ok:
            return _dense_spectrum(grid, v_eff, scheme, 1)
        raise TooLarge("Fermi tail not reached within max_pairs and grid too large for dense path")
    return spec


def _log_cosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def fermi_divided_difference(x, y):
    """``(f_FD(x) - f_FD(y)) / (x - y)``, stable for close and for large arguments.

    Uses ``-sinhc((x-y)/2) / (4 cosh(x/2) cosh(y/2))`` in log form; the
    diagonal ``x = y`` gives ``f_FD'(x)``.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    a = 0.5 * np.abs(x - y)
    small = a < 1e-3
    safe = np.where(small, 1.0, a)
    log_sinhc = np.where(small, np.log1p(a * a / 6.0 + a**4 / 120.0),
                         safe + np.log1p(-np.exp(-2.0 * safe)) - math.log(2.0) - np.log(safe))
    return -np.exp(log_sinhc - _log_cosh(0.5 * x) - _log_cosh(0.5 * y) - math.log(4.0))


class RehfResponse:
    """Exact first-order change of the REHF density under ``v_eff → v_eff + δv``.

    With eigenpairs ``(λ_i, ψ_i)`` of the dense Hamiltonian,
    ``δρ(x) = h^{-d} Σ_ij F_ij ψ_i(x) ψ_j(x) ⟨ψ_i, δv ψ_j⟩`` where ``F_ij`` is
    the divided difference of ``λ ↦ f_FD(β(λ - μ))``.  Pairs in which both
    states have occupation below ``e^{-40}`` are dropped.
    """

    def __init__(self, grid: GridSpec, v_eff, scheme: str, beta: float, mu: float):
        self.grid = grid
        lam, vec = np.linalg.eigh(_hamiltonian_dense(grid, grid.check(v_eff, "v_eff"), scheme))
        x = beta * (lam - mu)
        m = max(1, int(np.searchsorted(x, 40.0)))
        self.vec, self.occ = vec, vec[:, :m]
        F = beta * fermi_divided_difference(x[:m, None], x[None, :])
        F[:, m:] *= 2.0  # (i, j) and (j, i) both appear once i is occupied and j is not
        self.F = F

    def apply(self, dv) -> np.ndarray:
        dv = self.grid.check(dv, "dv").ravel()
        A = self.occ.T @ (dv[:, None] * self.vec)
        out = np.sum((self.vec @ (self.F * A).T) * self.occ, axis=1)
        return (out / self.grid.dv).reshape(self.grid.shape)


def density_rehf(grid: GridSpec, V, phi, thermo: ThermoState, cfg: EigenSolveConfig | None = None,
                 scheme: str = "stencil2") -> np.ndarray:
    """``ρ(x) = Σ_i f_FD(β(λ_i - μ)) |ψ_i(x)|²`` for ``H = -ε²Δ + V - φ``."""
    v_eff = grid.check(V, "V") - grid.check(phi, "phi")
    spec = rehf_spectrum(grid, v_eff, scheme, cfg, thermo.beta, thermo.mu)
    return spec.density(thermo.beta, thermo.mu)


class _LandscapeCache:
    """Bounded memo of landscape solves keyed by the exact input bytes."""

    def __init__(self, maxsize=32):
        self.maxsize = maxsize
        self._store = OrderedDict()

    def get(self, grid, v_eff, scheme, tol=1e-11):
        key = (grid, scheme, tol, v_eff.tobytes())
        hit = self._store.get(key)
        if hit is not None:
            self._store.move_to_end(key)
            return hit
        res = solve_landscape(grid, v_eff, tol=tol, scheme=scheme)
        self._store[key] = res
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return res

    def clear(self):
        self._store.clear()


landscape_cache = _LandscapeCache()


def density_pl(grid: GridSpec, V, phi, thermo: ThermoState, scheme: str = "stencil2") -> np.ndarray:
    """PL density from ``W₁ = 1/u₁``, ``(-ε²Δ + V - φ - V_cut)u₁ = 1``."""
    V, phi = grid.check(V, "V"), grid.check(phi, "phi")
    W1 = solve_landscape(grid, V - phi - thermo.v_cut, tol=1e-11, scheme=scheme).W
    return fermi_integral(W1 + thermo.v_cut - thermo.mu, thermo.beta, grid.eps, grid.d)


def density_lsc(grid: GridSpec, V, phi, thermo: ThermoState, scheme: str = "stencil2") -> np.ndarray:
    """LSC density from ``W₂ = 1/u₂``, ``(-ε²Δ + V - V_cut)u₂ = 1`` (cached)."""
    V, phi = grid.check(V, "V"), grid.check(phi, "phi")
    W2 = landscape_cache.get(grid, V - thermo.v_cut, scheme).W
    return fermi_integral(W2 - phi + thermo.v_cut - thermo.mu, thermo.beta, grid.eps, grid.d)


# ---------------------------------------------------------------------------
# Frozen-φ views used by the chemical-potential and SCF solvers: all the
# φ-dependent work is done once, after which F(φ, ·) is cheap to re-evaluate.


class FrozenDensity:
    """``μ ↦ F(φ, μ)`` for one fixed ``φ``."""

    model: str

    def density(self, mu: float) -> np.ndarray:
        raise NotImplementedError

    def density_dmu(self, mu: float) -> np.ndarray:
        raise NotImplementedError

    def energy_range(self) -> tuple[float, float]:
        raise NotImplementedError


class _FrozenRehf(FrozenDensity):
    model = "rehf"

    def __init__(self, spectrum, beta):
        self.spectrum, self.beta = spectrum, beta

    def density(self, mu):
        return self.spectrum.density(self.beta, mu)

    def density_dmu(self, mu):
        return self.spectrum.density_dmu(self.beta, mu)

    def energy_range(self):
        return self.spectrum.lowest, self.spectrum.highest


class _FrozenSemiclassical(FrozenDensity):
    """Momentum integral at local level ``a(x) - μ``."""

    def __init__(self, model, level, grid, beta, extra=None):
        self.model, self.level, self.grid, self.beta = model, level, grid, beta
        self.extra = extra or {}

    def density(self, mu):
        return fermi_integral(self.level - mu, self.beta, self.grid.eps, self.grid.d)

    def density_dmu(self, mu):
        return -fermi_integral_deriv(self.level - mu, self.beta, self.grid.eps, self.grid.d)

    def energy_range(self):
        return float(self.level.min()), float(self.level.max())


class DensityMap:
    """One of the three density maps bound to a fixed system.

    Args:
        model: ``"rehf"``, ``"pl"`` or ``"lsc"``.
        grid, V: grid and external potential.
        beta: inverse temperature.
        v_cut: landscape shift (ignored by ``rehf``).
        scheme: Laplacian discretization shared by Hamiltonian and landscape.
        eig: eigensolver settings for ``rehf``.
    """

    def __init__(self, model, grid, V, beta, v_cut, scheme="stencil2", eig=None):
        model = model.lower()
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
        self.model, self.grid, self.beta, self.v_cut = model, grid, float(beta), float(v_cut)
        self.V = grid.check(V, "V")
        self.scheme = scheme
        self.eig = eig or EigenSolveConfig()
        self._w2 = None

    @property
    def W2(self):
        if self._w2 is None:
            self._w2 = landscape_cache.get(self.grid, self.V - self.v_cut, self.scheme).W
        return self._w2

    def freeze(self, phi, mu_hint: float | None = None) -> FrozenDensity:
        phi = self.grid.check(phi, "phi")
        if self.model == "rehf":
            v_eff = self.V - phi
            mu = mu_hint if mu_hint is not None else float(v_eff.max())
            spec = rehf_spectrum(self.grid, v_eff, self.scheme, self.eig, self.beta, mu)
            return _FrozenRehf(spec, self.beta)
        if self.model == "pl":
            land = solve_landscape(self.grid, self.V - phi - self.v_cut, tol=1e-11, scheme=self.scheme)
            return _FrozenSemiclassical("pl", land.W + self.v_cut, self.grid, self.beta,
                                        {"u": land.u, "W": land.W})
        return _FrozenSemiclassical("lsc", self.W2 - phi + self.v_cut, self.grid, self.beta)

    def __call__(self, phi, mu):
        return self.freeze(phi, mu).density(mu)
