"""Periodic grids on the cube [0, L]^d and the operators that live on them.

Fields are plain ``numpy`` arrays of shape ``grid.shape`` (row-major, axis 0
slowest).  Every "Laplacian" in this package means the *negative* Laplacian
``-Δ``, so symbols and matrices are positive semidefinite.

Fourier conventions: ``numpy.fft`` ordering, wave vectors ``k = 2π m / L``
folded to the symmetric Nyquist range, and norms normalized so that the
discrete L² norm reproduces the integral ``∫_Ω |f|²``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import BadDimension, GridMismatch, NonAlignedGrid, NonNeutralSource

SCHEMES = ("stencil2", "spectral")


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``n`` points per axis on ``[0, L]^d``.

    Attributes:
        d: spatial dimension (1, 2 or 3).
        L: side length, a positive integer (unit cells per axis).
        n: points per axis, a multiple of ``L``.
        eps: semiclassical parameter.
    """

    d: int
    L: int
    n: int
    eps: float

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def volume(self) -> float:
        return float(self.L) ** self.d

    @property
    def dv(self) -> float:
        """Volume element ``h^d`` of one grid point."""
        return self.h**self.d

    @property
    def points_per_cell(self) -> int:
        return self.n // self.L

    @cached_property
    def k1(self) -> np.ndarray:
        """Wave numbers along one axis in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def kvecs(self) -> tuple[np.ndarray, ...]:
        """Broadcastable wave-vector components, one array per axis."""
        out = []
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.n
            out.append(self.k1.reshape(shape))
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        """``|k|²`` on the full Fourier grid."""
        k2 = np.zeros(self.shape)
        for k in self.kvecs:
            k2 = k2 + k * k
        return k2

    def coords(self) -> tuple[np.ndarray, ...]:
        """Grid point coordinates as a tuple of ``d`` full arrays."""
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    def check(self, f, name: str = "field") -> np.ndarray:
        """Validate a field against this grid and return it as a float array."""
        arr = np.asarray(f, dtype=float)
        if arr.shape != self.shape:
            if arr.size == self.size and arr.ndim == 1:
                arr = arr.reshape(self.shape)
            else:
                raise GridMismatch(f"{name} has shape {arr.shape}, grid expects {self.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        return arr


def build_grid(d: int, L: int, n: int, eps: float) -> GridSpec:
    """Validate parameters and return a :class:`GridSpec`."""
    if d not in (1, 2, 3):
        raise BadDimension(f"d must be 1, 2 or 3, got {d}")
    if int(L) != L or L < 1:
        raise NonAlignedGrid(f"L must be a positive integer, got {L}")
    if int(n) != n or n < 1:
        raise NonAlignedGrid(f"n must be a positive integer, got {n}")
    if n % L:
        raise NonAlignedGrid(f"n={n} is not a multiple of L={L}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return GridSpec(int(d), int(L), int(n), float(eps))


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown Laplacian scheme {scheme!r}; expected one of {SCHEMES}")


def laplacian_symbol(grid: GridSpec, scheme: str = "stencil2", shift=None) -> np.ndarray:
    """Fourier symbol of ``-Δ`` for ``scheme``, optionally Bloch-shifted.

    ``shift`` is a length-``d`` quasi-momentum ``θ``; the symbol is then that of
    ``(-i∇ + θ)²`` acting on periodic functions.
    """
    _check_scheme(scheme)
    theta = np.zeros(grid.d) if shift is None else np.broadcast_to(np.asarray(shift, float), (grid.d,))
    sym = np.zeros(grid.shape)
    for k, t in zip(grid.kvecs, theta):
        q = k + t
        if scheme == "spectral":
            sym = sym + q * q
        else:
            sym = sym + (2.0 - 2.0 * np.cos(q * grid.h)) / grid.h**2
    return sym


def laplacian_apply(grid: GridSpec, f, scheme: str = "stencil2") -> np.ndarray:
    """Return ``-Δf``.

    ``stencil2`` is the standard three-point difference on each axis;
    ``spectral`` multiplies Fourier coefficients by ``|k|²``.
    """
    _check_scheme(scheme)
    f = grid.check(f)
    if scheme == "spectral":
        return np.fft.ifftn(grid.k2 * np.fft.fftn(f)).real
    out = np.zeros_like(f)
    for axis in range(grid.d):
        out += 2.0 * f - np.roll(f, 1, axis=axis) - np.roll(f, -1, axis=axis)
    return out / grid.h**2


@functools.lru_cache(maxsize=64)
def _axis_matrix(n: int, h: float, scheme: str, theta: float = 0.0) -> np.ndarray:
    """One-axis ``-Δ`` matrix; cached and returned read-only."""
    a = _assemble_axis(n, h, scheme, theta)
    a.setflags(write=False)
    return a


def _assemble_axis(n, h, scheme, theta):
    if scheme == "stencil2" and theta == 0.0:
        a = np.zeros((n, n))
        idx = np.arange(n)
        a[idx, idx] += 2.0
        a[idx, (idx + 1) % n] -= 1.0
        a[idx, (idx - 1) % n] -= 1.0
        return a / h**2
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h) + theta
    if scheme == "spectral":
        sym = k * k
    else:
        sym = (2.0 - 2.0 * np.cos(k * h)) / h**2
    dft = np.fft.fft(np.eye(n), axis=0)
    a = dft.conj().T @ (sym[:, None] * dft) / n
    if theta == 0.0:
        return a.real.copy()
    return a


def laplacian_matrix(grid: GridSpec, scheme: str = "stencil2", shift=None, sparse: bool = False):
    """Assemble ``-Δ`` as a matrix acting on row-major flattened fields.

    Dense by default.  ``sparse=True`` is only available for the unshifted
    ``stencil2`` scheme and returns a CSR matrix.
    """
    _check_scheme(scheme)
    theta = np.zeros(grid.d) if shift is None else np.broadcast_to(np.asarray(shift, float), (grid.d,))
    if sparse:
        if scheme != "stencil2" or np.any(theta != 0.0):
            raise ValueError("sparse assembly requires the unshifted stencil2 scheme")
        a1 = sp.csr_matrix(_axis_matrix(grid.n, grid.h, scheme))
        eye = sp.identity(grid.n, format="csr")
        out = sp.csr_matrix((grid.size, grid.size))
        for axis in range(grid.d):
            term = None
            for j in range(grid.d):
                factor = a1 if j == axis else eye
                term = factor if term is None else sp.kron(term, factor, format="csr")
            out = out + term
        return out.tocsr()
    mats = [_axis_matrix(grid.n, grid.h, scheme, float(t)) for t in theta]
    dtype = complex if any(np.iscomplexobj(m) for m in mats) else float
    out = np.zeros((grid.size, grid.size), dtype=dtype)
    for axis in range(grid.d):
        term = np.ones((1, 1))
        for j in range(grid.d):
            term = np.kron(term, mats[j] if j == axis else np.eye(grid.n))
        out += term
    return out


def gradient(grid: GridSpec, f) -> tuple[np.ndarray, ...]:
    """Spectral gradient; the unpaired Nyquist mode is dropped so outputs stay real."""
    f = grid.check(f)
    fhat = np.fft.fftn(f)
    out = []
    for k in grid.kvecs:
        kk = k.copy()
        if grid.n % 2 == 0:
            kk[np.isclose(np.abs(kk), np.pi / grid.h)] = 0.0
        out.append(np.fft.ifftn(1j * kk * fhat).real)
    return tuple(out)


def poisson_solve(grid: GridSpec, g, tol_neutral: float | None = None) -> np.ndarray:
    """Mean-zero solution of ``-Δφ = g`` by spectral inversion.

    Raises:
        NonNeutralSource: if ``|mean(g)|`` exceeds ``tol_neutral``
            (default ``1e-10 ‖g‖₂ + 1e-14``).
    """
    g = grid.check(g, "source")
    mean = g.mean()
    if tol_neutral is None:
        tol_neutral = 1e-10 * lp_norm(grid, g, 2) + 1e-14
    if abs(mean) > tol_neutral:
        raise NonNeutralSource(f"source has mean {mean:.3e} (tolerance {tol_neutral:.3e})")
    ghat = np.fft.fftn(g)
    k2 = grid.k2.copy()
    k2.flat[0] = 1.0
    phihat = ghat / k2
    phihat.flat[0] = 0.0
    return np.fft.ifftn(phihat).real


def sobolev_norm(grid: GridSpec, f, s: float, homogeneous: bool = False) -> float:
    """Periodic ``H^s`` norm ``(Σ_k (1+|k|²)^s |f̂_k|²)^{1/2}``.

    ``f̂`` is scaled so that ``s = 0`` gives the L²(Ω) integral norm.  With
    ``homogeneous=True`` the zero mode is dropped and the weight is ``|k|^{2s}``.
    """
    f = grid.check(f)
    power = np.abs(np.fft.fftn(f)) ** 2
    if homogeneous:
        k2 = grid.k2.copy()
        k2.flat[0] = 1.0
        weight = k2**s
        weight.flat[0] = 0.0
    else:
        weight = (1.0 + grid.k2) ** s
    total = np.sum(weight * power) * grid.volume / grid.size**2
    return float(np.sqrt(total))


def lp_norm(grid: GridSpec, f, p: float = 2) -> float:
    """Riemann-sum ``L^p(Ω)`` norm; ``p = inf`` gives the max norm."""
    f = np.abs(grid.check(f))
    if np.isinf(p):
        return float(f.max())
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float((np.sum(f**p) * grid.dv) ** (1.0 / p))


def integrate(grid: GridSpec, f) -> float:
    """``∫_Ω f`` by the rectangle rule (exact for trigonometric polynomials)."""
    return float(np.sum(grid.check(f)) * grid.dv)
