"""Convex free-energy formulation of the LSC model on a radial momentum grid.

Occupations ``η[j, x]`` live on (momentum node, grid point) pairs.  The
one-body energy is ``h(p, x) = p² + W(x) + V_cut`` in the scaled momentum
``p`` used by :func:`lscf.density.fermi_integral`, so that the minimizer's
density ``ρ_η = Σ_j w_j η[j]`` coincides with the LSC density map.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as so
from scipy.special import xlogy

from .density import SPHERE_AREA, fermi_dirac
from .errors import BadOccupation, BoundaryTouch, NoConvergence
from .grid import GridSpec, poisson_solve, sobolev_norm
from .scf import _Anderson

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MomentumGrid:
    """Radial nodes ``p_j`` and weights for ``(2πε)^{-d} ∫_{R^d} · dp``."""

    p: np.ndarray
    w: np.ndarray
    eps: float
    d: int

    @property
    def size(self) -> int:
        return self.p.size

    def integrate(self, values) -> np.ndarray:
        """Contract ``values[j, ...]`` with the weights."""
        return np.tensordot(self.w, values, axes=(0, 0))


def build_momentum_grid(eps: float, d: int, beta: float, a_min: float, n_p: int = 64) -> MomentumGrid:
    """Gauss–Legendre nodes on ``[0, p_max]``, ``p_max = √(max(0, -a_min) + 40/β)``.

    When ``a_min < 0`` half the nodes go below the Fermi edge ``√(-a_min)``.
    """
    p_max = math.sqrt(max(0.0, -a_min) + 40.0 / beta)
    x, wx = np.polynomial.legendre.leggauss(n_p // 2 if a_min < 0 else n_p)
    if a_min < 0:
        edge = math.sqrt(-a_min)
        segs = [(0.0, edge), (edge, p_max)]
    else:
        segs = [(0.0, p_max)]
    p, w = [], []
    for lo, hi in segs:
        p.append(lo + (hi - lo) * 0.5 * (x + 1.0))
        w.append(0.5 * (hi - lo) * wx)
    p, w = np.concatenate(p), np.concatenate(w)
    w = SPHERE_AREA[d] / (2.0 * math.pi * eps) ** d * p ** (d - 1) * w
    return MomentumGrid(p, w, float(eps), int(d))


def entropy_density(eta) -> np.ndarray:
    """``s(η) = -(η log η + (1-η) log(1-η))`` with ``s(0) = s(1) = 0``."""
    eta = np.asarray(eta, dtype=float)
    return -(xlogy(eta, eta) + xlogy(1.0 - eta, 1.0 - eta))


def _check_box(eta):
    if eta.min() < -1e-12 or eta.max() > 1.0 + 1e-12:
        raise BadOccupation(f"occupation outside [0, 1]: range [{eta.min():.3e}, {eta.max():.3e}]")
    return np.clip(eta, 0.0, 1.0)


def _one_body(mg: MomentumGrid, grid: GridSpec, W, v_cut):
    return (mg.p**2)[:, None] + (grid.check(W, "W").ravel() + v_cut)[None, :]


def occupation_density(mg: MomentumGrid, grid: GridSpec, eta) -> np.ndarray:
    """``ρ_η(x) = Σ_j w_j η[j, x]`` as a grid field."""
    return mg.integrate(eta).reshape(grid.shape)


def total_charge(mg: MomentumGrid, grid: GridSpec, eta) -> float:
    return float(np.sum(mg.integrate(eta)) * grid.dv)


def _coulomb_potential(grid, rho, kappa):
    """``(-Δ)^{-1}(ρ - κ)`` with the mean removed from the source."""
    g = rho - kappa
    return poisson_solve(grid, g - g.mean())


def free_energy(eta, mg: MomentumGrid, grid: GridSpec, W, v_cut: float, kappa, beta: float) -> float:
    """``Σ w h η h^d + ½‖ρ_η - κ‖²_{Ḣ^{-1}} - β^{-1} Σ w s(η) h^d``.

    Raises:
        BadOccupation: if ``η`` leaves ``[0, 1]`` by more than ``1e-12``.
    """
    eta = _check_box(np.asarray(eta, dtype=float).reshape(mg.size, grid.size))
    kappa = grid.check(kappa, "kappa")
    h = _one_body(mg, grid, W, v_cut)
    kinetic = float(np.sum(mg.w[:, None] * h * eta)) * grid.dv
    coulomb = 0.5 * sobolev_norm(grid, occupation_density(mg, grid, eta) - kappa, -1, homogeneous=True) ** 2
    entropy = float(np.sum(mg.w[:, None] * entropy_density(eta))) * grid.dv
    return kinetic + coulomb - entropy / beta


def free_energy_gradient(eta, mg: MomentumGrid, grid: GridSpec, W, v_cut: float, kappa, beta: float) -> np.ndarray:
    """Gradient per unit phase-space measure ``w_j h^d``.

    ``g[j, x] = h(p_j, x) + (-Δ)^{-1}(ρ_η - κ)(x) + β^{-1} log(η/(1-η))``.

    Raises:
        BoundaryTouch: if any ``η`` is within ``1e-9`` of 0 or 1.
    """
    eta = np.asarray(eta, dtype=float).reshape(mg.size, grid.size)
    if eta.min() <= 1e-9 or eta.max() >= 1.0 - 1e-9:
        raise BoundaryTouch("entropy gradient is singular at the edge of the box")
    kappa = grid.check(kappa, "kappa")
    pot = _coulomb_potential(grid, occupation_density(mg, grid, eta), kappa).ravel()
    return _one_body(mg, grid, W, v_cut) + pot[None, :] + np.log(eta / (1.0 - eta)) / beta


@dataclass(frozen=True)
class VariationalOptions:
    n_p: int = 64
    tol: float = 1e-8
    max_iter: int = 5000
    alpha: float = 0.5
    anderson_depth: int = 5
    min_alpha: float = 1e-10


@dataclass
class VariationalResult:
    eta: np.ndarray
    mu: float
    mg: MomentumGrid
    energies: list = field(default_factory=list)
    iterations: int = 0

    def density(self, grid: GridSpec) -> np.ndarray:
        return occupation_density(self.mg, grid, self.eta)


def _occupation(h_eff, beta, mu):
    return fermi_dirac(beta * (h_eff - mu))


def _solve_mu(mg, grid, h_eff, beta, charge):
    def excess(mu):
        return total_charge(mg, grid, _occupation(h_eff, beta, mu)) - charge

    lo, hi = float(h_eff.min()) - 1.0, float(h_eff.max())
    while excess(lo) > 0:
        lo -= 2.0 * (hi - lo)
    while excess(hi) < 0:
        hi += 2.0 * (hi - lo)
    return so.brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _descend(energy, eta, F, target, slack, t_min):
    """Backtrack along ``eta → target`` until the energy does not increase."""
    t = 1.0
    while t >= t_min:
        trial = eta + t * (target - eta)
        F_trial = energy(trial)
        if F_trial <= F + slack:
            return trial, F_trial
        t *= 0.5
    return None


def minimize_free_energy(grid: GridSpec, W, v_cut: float, kappa, beta: float,
                         opts: VariationalOptions | None = None, mg: MomentumGrid | None = None) -> VariationalResult:
    """Minimize the free energy over occupations with total charge ``∫κ``.

    Each step forms ``η̃ = f_FD(β(h + (-Δ)^{-1}(ρ_η - κ) - μ))`` with ``μ``
    fixed by the charge constraint.  Candidates come from an Anderson-mixed
    stream of Coulomb potentials (mixing ``opts.alpha``).  The step toward a
    candidate is halved until the free energy does not increase; if that
    fails the damped step ``η ← η + t(η̃ - η)`` is backtracked instead.  The
    accepted iterates are therefore monotone in energy.  Stops when
    ``‖η̃ - η‖_∞ ≤ opts.tol``.

    Raises:
        NoConvergence: after ``opts.max_iter`` steps.
    """
    opts = opts or VariationalOptions()
    kappa = grid.check(kappa, "kappa")
    charge = float(np.sum(kappa)) * grid.dv
    if not charge > 0:
        raise ValueError("total dopant charge must be positive")
    W = grid.check(W, "W")
    if mg is None:
        # A provisional grid locates μ; the final one covers a margin below min(h) - μ.
        rough = build_momentum_grid(grid.eps, grid.d, beta, -1.0, opts.n_p)
        mu0 = _solve_mu(rough, grid, _one_body(rough, grid, W, v_cut), beta, charge)
        mg = build_momentum_grid(grid.eps, grid.d, beta, float(W.min()) + v_cut - mu0 - 0.5, opts.n_p)
    h = _one_body(mg, grid, W, v_cut)

    def potential(eta):
        return _coulomb_potential(grid, occupation_density(mg, grid, eta), kappa).ravel()

    def occupy(pot):
        h_eff = h + pot[None, :]
        mu = _solve_mu(mg, grid, h_eff, beta, charge)
        return _occupation(h_eff, beta, mu), mu

    def energy(eta):
        return free_energy(eta, mg, grid, W, v_cut, kappa, beta)

    # Start from the charge-neutral occupation of the bare one-body energy.
    eta, mu = occupy(np.zeros(grid.size))
    F = energy(eta)
    energies = [F]
    slack = 1e-12 * max(1.0, abs(F))
    mixer = _Anderson(opts.anderson_depth, opts.alpha)
    stream = potential(eta)
    for it in range(1, opts.max_iter + 1):
        new, mu = occupy(potential(eta))
        change = float(np.max(np.abs(new - eta)))
        if change <= opts.tol:
            return VariationalResult(new, mu, mg, energies, it)
        # The candidate comes from an Anderson-mixed potential stream.  Occupations
        # built this way always satisfy the box and charge constraints, and so does
        # any convex combination with the current iterate.
        cand, _ = occupy(stream)
        stream = mixer.step(stream, potential(cand) - stream)
        step = _descend(energy, eta, F, cand, slack, 0.25)
        if step is None:
            # η̃ - η is a descent direction: η̃ minimizes the strictly convex
            # functional with the Coulomb term linearized at η.
            step = _descend(energy, eta, F, new, slack, opts.min_alpha)
        if step is not None:
            eta, F = step
        log.debug("variational it=%d change=%.3e F=%.15g", it, change, F)
        energies.append(F)
    raise NoConvergence(f"free-energy minimization did not converge in {opts.max_iter} steps", energies,
                        VariationalResult(eta, mu, mg, energies, opts.max_iter))
