"""Piecewise-constant Anderson-type potentials, dopant profiles and regime checks.

Random numbers come from numpy's counter-based Philox generator.  Each
consumer draws from its own stream, keyed by ``SeedSequence([seed, stream])``:

====== ==========================
stream consumer
====== ==========================
0      cell values ``ω_j``
1      pinned min/max cells
2      dopant profile
====== ==========================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParam, DegeneratePotential, GridMismatch
from .grid import GridSpec

STREAM_OMEGA = 0
STREAM_PIN = 1
STREAM_DOPANT = 2


def rng(seed: int, stream: int) -> np.random.Generator:
    """Philox generator for ``(seed, stream)``; identical on every platform."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class PwPotential:
    """Cell values of a potential that is constant on each unit cube.

    ``omega`` has shape ``(L,)*d``; cell ``j`` covers ``j + [0, 1)^d``.
    """

    L: int
    d: int
    omega: np.ndarray
    seed: int = 0

    @property
    def v_min(self) -> float:
        return float(self.omega.min())

    @property
    def v_max(self) -> float:
        return float(self.omega.max())

    @property
    def delta(self) -> float:
        return self.v_max - self.v_min


def gen_pw_potential(seed: int, L: int, d: int, v_min_target: float, delta: float) -> PwPotential:
    """Draw ``ω_j`` i.i.d. uniform on ``[v_min, v_min + δ]`` and pin the extremes.

    One uniformly chosen cell is set to ``v_min`` and another to ``v_min + δ``
    so both bounds are attained exactly.
    """
    if not v_min_target > 0:
        raise BadParam(f"v_min_target must be positive, got {v_min_target}")
    if not delta >= 0:
        raise BadParam(f"delta must be non-negative, got {delta}")
    ncell = L**d
    omega = v_min_target + delta * rng(seed, STREAM_OMEGA).random(ncell)
    if delta > 0 and ncell >= 2:
        lo, hi = rng(seed, STREAM_PIN).choice(ncell, size=2, replace=False)
        omega[lo] = v_min_target
        omega[hi] = v_min_target + delta
    else:
        omega[:] = v_min_target
    return PwPotential(L=L, d=d, omega=omega.reshape((L,) * d), seed=seed)


def realize_on_grid(pw: PwPotential, grid: GridSpec) -> np.ndarray:
    """Sample the potential on grid points: ``V(x) = ω_{⌊x⌋}``."""
    if pw.L != grid.L or pw.d != grid.d:
        raise GridMismatch(f"potential (L={pw.L}, d={pw.d}) does not match grid (L={grid.L}, d={grid.d})")
    v = np.asarray(pw.omega, dtype=float)
    m = grid.points_per_cell
    for axis in range(grid.d):
        v = np.repeat(v, m, axis=axis)
    return v


def select_vcut(V, c_cut: float = 1.0) -> float:
    """``V_cut = V_min - c_cut δ^{1/4}`` with ``δ = max V - min V``."""
    V = np.asarray(V, dtype=float)
    v_min = float(V.min())
    delta = float(V.max()) - v_min
    if delta <= 0:
        raise DegeneratePotential("constant potential: supply an explicit V_cut")
    if not c_cut > 0:
        raise BadParam(f"c_cut must be positive, got {c_cut}")
    return v_min - c_cut * delta**0.25


def gen_dopant(grid: GridSpec, kappa0: float, amplitude: float = 0.0, seed: int = 0) -> np.ndarray:
    """Dopant density ``κ = κ₀ + amplitude·w``.

    ``w`` is a seeded random field restricted to Fourier modes with
    ``0 < |k| ≤ 4π/L`` and scaled to ``max|w| = 1``, so ``κ`` is smooth and
    ``mean(κ) = κ₀`` to rounding.
    """
    if amplitude < 0:
        raise BadParam(f"amplitude must be non-negative, got {amplitude}")
    kappa = np.full(grid.shape, float(kappa0))
    if amplitude == 0:
        return kappa
    noise = rng(seed, STREAM_DOPANT).standard_normal(grid.shape)
    nhat = np.fft.fftn(noise)
    kmax = 2.0 * (2.0 * np.pi / grid.L)
    mask = (grid.k2 <= kmax**2 * (1 + 1e-12)) & (grid.k2 > 0)
    w = np.fft.ifftn(np.where(mask, nhat, 0.0)).real
    w -= w.mean()
    scale = np.abs(w).max()
    if scale > 0:
        w /= scale
    kappa = kappa0 + amplitude * w
    return kappa - (kappa.mean() - kappa0)


@dataclass(frozen=True)
class RegimeParams:
    eps: float
    delta: float
    v_min: float
    beta: float
    K: float
    kappa0: float = 1.0
    ratio_max: float = 0.2
    mu: float | None = None
    C: float = 1.0

    @property
    def v_max(self) -> float:
        return self.v_min + self.delta

    @property
    def m0(self) -> float:
        """Coercivity scale ``ε^{δ^{1/4}}``."""
        return self.eps ** (self.delta**0.25)


@dataclass
class RegimeReport:
    eps_over_delta: float
    delta_over_vmin: float
    thermal_level: float
    corollary_upper: float | None
    corollary_lower: float | None
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def failures(self) -> list[str]:
        return [k for k, ok in self.flags.items() if not ok]


def regime_check(params: RegimeParams) -> RegimeReport:
    """Diagnose how well a parameter set sits in the asymptotic regime.

    "Much smaller than" is read as a ratio at most ``ratio_max``.  When ``mu`` is
    given, the two charge-scale products
    ``ε^{-3}β^{-3/2}exp(-β(V_max-μ+Cδ))`` and ``ε^{-3}β^{-3/2}exp(-β(V_min-μ-Cδ))``
    are reported and required to bracket 1 up to a factor ``1/ratio_max``.
    """
    p = params
    eps_ratio = p.eps / p.delta if p.delta > 0 else math.inf
    delta_ratio = p.delta / p.v_min
    level = math.log(p.eps**-3) / p.beta
    flags = {
        "eps<<delta": eps_ratio <= p.ratio_max,
        "delta<<v_min": delta_ratio <= p.ratio_max,
        "K<log(eps^-3)/beta<v_min": p.K < level < p.v_min,
        "0<K<v_min": 0 < p.K < p.v_min,
    }
    upper = lower = None
    if p.mu is not None:
        pref = p.eps**-3 * p.beta**-1.5
        upper = pref * math.exp(-p.beta * (p.v_max - p.mu + p.C * p.delta))
        lower = pref * math.exp(-p.beta * (p.v_min - p.mu - p.C * p.delta))
        flags["charge-scale bracket"] = upper <= 1.0 / p.ratio_max and lower >= p.ratio_max
    return RegimeReport(eps_ratio, delta_ratio, level, upper, lower, flags)
