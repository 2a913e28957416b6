"""Charge neutrality and the self-consistent Poisson loop ``-Δφ = κ - F(φ, μ)``.

The gauge is ``mean(φ) = 0``; the chemical potential is re-solved from the
neutrality condition ``mean F(φ, μ) = κ₀`` at every outer iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize as so
import scipy.sparse.linalg as spla

from .density import DensityMap, EigenSolveConfig, FrozenDensity, RehfResponse, fermi_integral_deriv
from .errors import NoBracket, NoConvergence
from .grid import GridSpec, laplacian_apply, poisson_solve, sobolev_norm
from .landscape import solve_schrodinger

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScfOptions:
    """Iteration controls shared by the fixed-point and Newton solvers.

    ``alpha`` is the linear mixing weight, ``anderson_depth`` the number of
    previous residuals used for Anderson extrapolation (0 disables it).
    """

    alpha: float = 0.5
    anderson_depth: int = 5
    tol: float = 1e-8
    max_iter: int = 200
    newton: bool = False
    tol_neutral: float = 1e-12
    krylov_tol: float = 1e-10
    krylov_maxiter: int = 200
    max_newton: int = 20

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.anderson_depth < 0:
            raise ValueError("anderson_depth must be >= 0")


@dataclass
class ScfState:
    model: str
    phi: np.ndarray
    mu: float
    rho: np.ndarray
    residual_h2: float
    pde_residual: float
    neutrality_residual: float
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = False
    system: DensityMap | None = field(default=None, repr=False)
    kappa: np.ndarray | None = field(default=None, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.system.grid


# ---------------------------------------------------------------------------
# chemical potential


def _charge(frozen: FrozenDensity, mu: float) -> float:
    return float(np.mean(frozen.density(mu)))


def solve_mu_frozen(frozen: FrozenDensity, kappa0: float, beta: float, tol: float = 1e-12,
                    max_expand: int = 60) -> float:
    """Root of the increasing map ``θ(μ) = mean F(φ, μ)`` at ``θ = κ₀``.

    The bracket starts at ``[min level - 10/β, max level]`` and is widened
    geometrically until it straddles ``κ₀``.
    """
    if not kappa0 > 0:
        raise ValueError(f"kappa0 must be positive, got {kappa0}")
    e_lo, e_hi = frozen.energy_range()
    lo, hi = e_lo - 10.0 / beta, e_hi
    step = max(1.0, e_hi - e_lo, 10.0 / beta)
    theta_lo, theta_hi = _charge(frozen, lo), _charge(frozen, hi)
    expand = 0
    while theta_lo > kappa0:
        lo -= step
        step *= 2.0
        theta_lo = _charge(frozen, lo)
        expand += 1
        if expand > max_expand:
            raise NoBracket(f"no lower bracket for kappa0={kappa0}")
    step = max(1.0, e_hi - e_lo, 10.0 / beta)
    while theta_hi < kappa0:
        hi += step
        step *= 2.0
        theta_hi = _charge(frozen, hi)
        expand += 1
        if expand > max_expand:
            raise NoBracket(f"kappa0={kappa0} unreachable (charge {theta_hi:.3e} at mu={hi:.3e})")
    if theta_lo > 0:
        # log θ is close to linear in μ, which keeps the bracketed solve short.
        mu = so.brentq(lambda m: math.log(_charge(frozen, m) / kappa0), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    else:
        mu = so.brentq(lambda m: _charge(frozen, m) - kappa0, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    # Final bisection polish in case the tolerance is tighter than brentq's stopping rule.
    for _ in range(200):
        err = _charge(frozen, mu) - kappa0
        if abs(err) <= tol * kappa0:
            return float(mu)
        if err > 0:
            hi = mu
        else:
            lo = mu
        mu = 0.5 * (lo + hi)
    raise NoBracket(f"neutrality not reached to {tol:g}; residual {err:.3e}")


def solve_mu(model: str, grid: GridSpec, V, phi, beta: float, v_cut: float, kappa0: float,
             scheme: str = "stencil2", eig: EigenSolveConfig | None = None, tol: float = 1e-12) -> float:
    """Chemical potential making ``mean F(φ, μ) = κ₀`` for one of the three models."""
    dm = DensityMap(model, grid, V, beta, v_cut, scheme, eig)
    return solve_mu_frozen(dm.freeze(phi), kappa0, beta, tol)


# ---------------------------------------------------------------------------
# fixed point


class _Anderson:
    """Anderson extrapolation on ``x ↦ g(x)`` with residual ``f = g(x) - x``."""

    def __init__(self, depth, alpha):
        self.depth, self.alpha = depth, alpha
        self.dx, self.df = [], []
        self.prev = None

    def step(self, x, f):
        if self.prev is not None and self.depth:
            px, pf = self.prev
            self.dx.append(x - px)
            self.df.append(f - pf)
            if len(self.dx) > self.depth:
                self.dx.pop(0)
                self.df.pop(0)
        self.prev = (x, f)
        if not self.dx:
            return x + self.alpha * f
        DX = np.stack(self.dx, axis=1)
        DF = np.stack(self.df, axis=1)
        gamma, *_ = np.linalg.lstsq(DF, f, rcond=None)
        return x + self.alpha * f - (DX + self.alpha * DF) @ gamma


def _pde_residual(grid, phi, rho, kappa):
    res = laplacian_apply(grid, phi, "spectral") + rho - kappa
    return sobolev_norm(grid, res, -2)


def _evaluate(system, phi, kappa0, opts, mu_hint=None):
    frozen = system.freeze(phi, mu_hint)
    mu = solve_mu_frozen(frozen, kappa0, system.beta, opts.tol_neutral)
    return frozen, mu, frozen.density(mu)


def _neutral_poisson(grid, g):
    return poisson_solve(grid, g - g.mean())


def _finish(model, system, kappa, phi, mu, rho, step, pde, it, history, converged):
    kappa0 = float(kappa.mean())
    return ScfState(
        model=model, phi=phi, mu=mu, rho=rho, residual_h2=step, pde_residual=pde,
        neutrality_residual=float(rho.mean() - kappa0), iterations=it, history=history,
        converged=converged, system=system, kappa=kappa,
    )


def scf_solve(model: str, grid: GridSpec, V, kappa, beta: float, v_cut: float,
              opts: ScfOptions | None = None, scheme: str = "stencil2",
              eig: EigenSolveConfig | None = None, phi0=None) -> ScfState:
    """Damped (Anderson-accelerated) fixed point for ``-Δφ = κ - F(φ, μ)``.

    Each step solves for ``μ_k``, evaluates ``ρ_k = F(φ_k, μ_k)`` and
    ``φ̃ = (-Δ)^{-1}(κ - ρ_k)``, then mixes.  Stops when both the H² step and
    the H^{-2} PDE residual fall below ``opts.tol``.  With ``opts.newton`` the
    call is forwarded to :func:`newton_solve`.

    Raises:
        NoConvergence: after ``opts.max_iter`` steps; carries the history.
    """
    opts = opts or ScfOptions()
    if opts.newton:
        return newton_solve(model, grid, V, kappa, beta, v_cut, opts, scheme, eig, phi0)
    kappa = grid.check(kappa, "kappa")
    kappa0 = float(kappa.mean())
    system = DensityMap(model, grid, V, beta, v_cut, scheme, eig)
    phi = np.zeros(grid.shape) if phi0 is None else grid.check(phi0, "phi0") - np.mean(phi0)
    mixer = _Anderson(opts.anderson_depth, opts.alpha)
    history = []
    mu = None
    for it in range(1, opts.max_iter + 1):
        _, mu, rho = _evaluate(system, phi, kappa0, opts, mu)
        target = _neutral_poisson(grid, kappa - rho)
        resid = target - phi
        pde = _pde_residual(grid, phi, rho, kappa)
        new = mixer.step(phi.ravel(), resid.ravel()).reshape(grid.shape)
        new -= new.mean()
        step = sobolev_norm(grid, new - phi, 2)
        history.append({"iteration": it, "step_h2": step, "pde_residual": pde, "mu": mu})
        log.debug("scf %s it=%d step=%.3e pde=%.3e mu=%.12f", model, it, step, pde, mu)
        if step <= opts.tol and pde <= opts.tol:
            return _finish(model, system, kappa, phi, mu, rho, step, pde, it, history, True)
        phi = new
    state = _finish(model, system, kappa, phi, mu, rho, step, pde, opts.max_iter, history, False)
    raise NoConvergence(f"{model} SCF did not converge in {opts.max_iter} iterations", history, state)


# ---------------------------------------------------------------------------
# linearization


def _fd_sigma(phi0, direction):
    scale = max(1e-4 * float(np.max(np.abs(phi0))), 1e-6)
    return scale / float(np.max(np.abs(direction)))


class _Linearization:
    """``M = d_φ F`` at fixed ``(φ₀, μ)`` plus ``g = ∂F/∂μ``."""

    def __init__(self, system: DensityMap, phi0, mu):
        self.system, self.phi0, self.mu = system, phi0, mu
        grid = system.grid
        self.frozen = system.freeze(phi0, mu)
        self.dmu = self.frozen.density_dmu(mu)
        if system.model == "lsc":
            self.m = self.dmu  # -∂_a of the momentum integral
        elif system.model == "pl":
            W0 = self.frozen.extra["W"]
            self.u0 = self.frozen.extra["u"]
            self.m = -fermi_integral_deriv(W0 + system.v_cut - mu, system.beta, grid.eps, grid.d) * W0
            self.v_h = system.V - phi0 - system.v_cut
        else:
            self.m = self.dmu
            eig = system.eig
            dense = eig.kpoints == 1 and eig.method != "lanczos" and grid.size <= eig.dense_limit
            self.response = RehfResponse(grid, system.V - phi0, system.scheme, system.beta, mu) if dense else None

    def apply(self, direction):
        system, grid = self.system, self.system.grid
        direction = grid.check(direction, "direction")
        if system.model == "lsc":
            return self.m * direction
        if system.model == "pl":
            y, _, _ = solve_schrodinger(grid, self.v_h, self.u0 * direction, tol=1e-11, scheme=system.scheme)
            return self.m * (y / self.u0)
        if not np.any(direction):
            return np.zeros(grid.shape)
        if self.response is not None:
            return self.response.apply(-direction)
        sigma = _fd_sigma(self.phi0, direction)
        plus = system.freeze(self.phi0 + sigma * direction, self.mu).density(self.mu)
        minus = system.freeze(self.phi0 - sigma * direction, self.mu).density(self.mu)
        return (plus - minus) / (2.0 * sigma)


def multiplier_field(state: ScfState) -> np.ndarray:
    """Pointwise multiplication part of the linearization (``m_LSC`` or ``m_PL``)."""
    if state.model == "rehf":
        raise ValueError("the REHF linearization has no multiplication form")
    return _Linearization(state.system, state.phi, state.mu).m


def linearization_apply(model: str, base: ScfState, direction) -> np.ndarray:
    """``d_φF(φ₀, μ)·direction`` at a converged state.

    LSC multiplies by ``m_LSC``; PL applies ``m_PL h₀^{-1}``.  REHF uses the
    exact eigenbasis response when the spectrum is dense, and otherwise a
    central difference of the density map with step ``σ`` scaled to ``φ₀``.
    """
    if model.lower() != base.model:
        raise ValueError(f"state is for model {base.model!r}, not {model!r}")
    return _Linearization(base.system, base.phi, base.mu).apply(direction)


# ---------------------------------------------------------------------------
# Newton


def newton_solve(model: str, grid: GridSpec, V, kappa, beta: float, v_cut: float,
                 opts: ScfOptions | None = None, scheme: str = "stencil2",
                 eig: EigenSolveConfig | None = None, phi0=None) -> ScfState:
    """Newton–Krylov iteration on the mean-zero residual ``R(φ) = -Δφ + F(φ, μ(φ)) - κ``.

    The Jacobian includes the response of ``μ`` to ``φ`` through the
    neutrality constraint.  Each linear solve is GMRES preconditioned by
    ``(-Δ + mean m)^{-1}``.  Steps that fail to reduce the residual are halved;
    if GMRES breaks down the iteration falls back to :func:`scf_solve`.
    """
    opts = opts or ScfOptions(newton=True)
    kappa = grid.check(kappa, "kappa")
    kappa0 = float(kappa.mean())
    system = DensityMap(model, grid, V, beta, v_cut, scheme, eig)
    phi = np.zeros(grid.shape) if phi0 is None else grid.check(phi0, "phi0") - np.mean(phi0)
    N = grid.size
    history = []
    k2 = grid.k2

    def residual(phi_, mu_hint=None):
        _, mu_, rho_ = _evaluate(system, phi_, kappa0, opts, mu_hint)
        R = laplacian_apply(grid, phi_, "spectral") + rho_ - kappa
        return mu_, rho_, R - R.mean()

    mu, rho, R = residual(phi)
    step = math.inf
    for it in range(1, opts.max_newton + 1):
        pde = sobolev_norm(grid, R, -2)
        history.append({"iteration": it, "step_h2": step, "pde_residual": pde, "mu": mu})
        log.debug("newton %s it=%d step=%.3e pde=%.3e", model, it, step, pde)
        if pde <= opts.tol and step <= opts.tol:
            return _finish(model, system, kappa, phi, mu, rho, step, pde, it, history, True)
        lin = _Linearization(system, phi, mu)
        g = lin.dmu
        gbar = float(g.mean())
        mbar = float(np.mean(lin.m))

        def jac(x):
            x = x.reshape(grid.shape)
            Mx = lin.apply(x)
            out = laplacian_apply(grid, x, "spectral") + Mx - g * (Mx.mean() / gbar)
            return (out - out.mean()).ravel()

        def prec(x):
            xh = np.fft.fftn(x.reshape(grid.shape))
            xh = xh / (k2 + mbar)
            xh.flat[0] = 0.0
            return np.fft.ifftn(xh).real.ravel()

        J = spla.LinearOperator((N, N), matvec=jac, dtype=float)
        P = spla.LinearOperator((N, N), matvec=prec, dtype=float)
        delta, info = spla.gmres(J, -R.ravel(), M=P, rtol=opts.krylov_tol, atol=0.0,
                                 restart=min(N, 60), maxiter=opts.krylov_maxiter)
        if info < 0 or not np.all(np.isfinite(delta)):
            log.warning("GMRES breakdown in Newton step; falling back to fixed point")
            fallback = replace(opts, newton=False)
            return scf_solve(model, grid, V, kappa, beta, v_cut, fallback, scheme, eig, phi)
        delta = delta.reshape(grid.shape)
        delta -= delta.mean()
        t = 1.0
        old = sobolev_norm(grid, R, -2)
        while True:
            trial = phi + t * delta
            mu_t, rho_t, R_t = residual(trial, mu)
            if sobolev_norm(grid, R_t, -2) < old or t < 1.0 / 64:
                break
            t *= 0.5
        step = sobolev_norm(grid, trial - phi, 2)
        phi, mu, rho, R = trial, mu_t, rho_t, R_t
    pde = sobolev_norm(grid, R, -2)
    if pde <= opts.tol and step <= opts.tol:
        return _finish(model, system, kappa, phi, mu, rho, step, pde, opts.max_newton, history, True)
    state = _finish(model, system, kappa, phi, mu, rho, step, pde, opts.max_newton, history, False)
    raise NoConvergence(f"{model} Newton did not converge in {opts.max_newton} steps", history, state)
