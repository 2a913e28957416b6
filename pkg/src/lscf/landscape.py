"""Landscape function ``u`` solving ``(-ε²Δ + v)u = 1`` and its potential ``W = 1/u``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import NonPositivePotential, NoConvergence, TooLarge
from .grid import GridSpec, gradient, laplacian_apply, laplacian_matrix, laplacian_symbol, lp_norm

DENSE_LIMIT = 4096


@dataclass
class LandscapeResult:
    u: np.ndarray
    W: np.ndarray
    residual: float
    iterations: int


def landscape_residual(grid: GridSpec, v_eff, u, scheme: str = "stencil2") -> float:
    """Relative residual ``‖(-ε²Δ + v)u - 1‖₂ / ‖1‖₂``."""
    r = grid.eps**2 * laplacian_apply(grid, u, scheme) + v_eff * u - 1.0
    return float(np.linalg.norm(r) / np.sqrt(grid.size))


def solve_landscape(grid: GridSpec, v_eff, tol: float = 1e-10, scheme: str = "stencil2", maxiter=None) -> LandscapeResult:
    """Solve the landscape equation by preconditioned conjugate gradients.

    The preconditioner is ``(-ε²Δ + mean(v))^{-1}`` applied in Fourier space,
    which is exact for constant ``v``.

    Raises:
        NonPositivePotential: if ``min(v_eff) <= 0``.
        NoConvergence: if the iteration cap (default ``10 n^d``) is reached.
    """
    u, residual, count = solve_schrodinger(grid, v_eff, None, tol, scheme, maxiter)
    if u.min() < 1e-300:
        raise NonPositivePotential("landscape function underflowed; cannot form W = 1/u")
    return LandscapeResult(u=u, W=1.0 / u, residual=residual, iterations=count)


def solve_schrodinger(grid: GridSpec, v_eff, rhs=None, tol: float = 1e-10, scheme: str = "stencil2", maxiter=None):
    """Solve ``(-ε²Δ + v)y = rhs`` (``rhs = 1`` by default) by PCG.

    Returns ``(y, relative_residual, iterations)``.
    """
    v = grid.check(v_eff, "v_eff")
    vmin = float(v.min())
    if vmin <= 0:
        raise NonPositivePotential(f"landscape requires v_eff > 0, min is {vmin:.6g}")
    if maxiter is None:
        maxiter = 10 * grid.size
    eps2 = grid.eps**2
    shape = grid.shape
    precond_sym = eps2 * laplacian_symbol(grid, scheme) + float(v.mean())

    def matvec(x):
        x = x.reshape(shape)
        return (eps2 * laplacian_apply(grid, x, scheme) + v * x).ravel()

    def precond(x):
        return np.fft.ifftn(np.fft.fftn(x.reshape(shape)) / precond_sym).real.ravel()

    n = grid.size
    A = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    M = spla.LinearOperator((n, n), matvec=precond, dtype=float)
    b = np.ones(n) if rhs is None else grid.check(rhs, "rhs").ravel()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(shape), 0.0, 0
    x0 = (b.reshape(shape) / v).ravel()
    count = 0

    def callback(_):
        nonlocal count
        count += 1

    # Restart a couple of times: CG's recursive residual can drift from the true one.
    for _ in range(3):
        x0, info = spla.cg(A, b, x0=x0, rtol=tol * 0.5, atol=0.0, maxiter=maxiter - count, M=M, callback=callback)
        u = x0.reshape(shape)
        residual = float(np.linalg.norm(matvec(x0) - b) / bnorm)
        if residual <= tol:
            break
        if count >= maxiter:
            raise NoConvergence(f"landscape CG stopped at residual {residual:.3e} after {count} iterations")
    else:
        raise NoConvergence(f"landscape CG stalled at residual {residual:.3e}")
    return u, residual, count


def local_minima(W) -> list[tuple[float, tuple[int, ...]]]:
    """Strict local minima over the periodic ``3^d - 1`` neighborhood, ascending.

    Points tied with any neighbor are excluded, so plateaus yield nothing.
    """
    W = np.asarray(W, dtype=float)
    is_min = np.ones(W.shape, dtype=bool)
    for offset in itertools.product((-1, 0, 1), repeat=W.ndim):
        if not any(offset):
            continue
        is_min &= W < np.roll(W, offset, axis=tuple(range(W.ndim)))
    idx = np.argwhere(is_min)
    found = [(float(W[tuple(i)]), tuple(int(j) for j in i)) for i in idx]
    found.sort()
    return found


def derivative_norms(grid: GridSpec, W, p: float = 2) -> tuple[float, float]:
    """``(‖∇W‖_p, ‖ΔW‖_p)`` with spectral derivatives."""
    if not (p >= 2):
        raise ValueError(f"p must lie in [2, inf], got {p}")
    grads = gradient(grid, W)
    grad_mag = np.sqrt(sum(g * g for g in grads))
    lap = laplacian_apply(grid, W, "spectral")
    return lp_norm(grid, grad_mag, p), lp_norm(grid, lap, p)


def _difference_matrices(grid: GridSpec, scheme: str) -> list[np.ndarray]:
    """Dense first-derivative matrices, one per axis."""
    n, h = grid.n, grid.h
    if scheme == "stencil2":
        d1 = np.zeros((n, n))
        idx = np.arange(n)
        d1[idx, (idx + 1) % n] = 0.5 / h
        d1[idx, (idx - 1) % n] = -0.5 / h
    else:
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            k[n // 2] = 0.0
        dft = np.fft.fft(np.eye(n), axis=0)
        d1 = (dft.conj().T @ ((1j * k)[:, None] * dft) / n).real
    mats = []
    for axis in range(grid.d):
        term = np.ones((1, 1))
        for j in range(grid.d):
            term = np.kron(term, d1 if j == axis else np.eye(n))
        mats.append(term)
    return mats


def conjugated_hamiltonian_spectrum(grid: GridSpec, v_eff, count: int, scheme: str = "stencil2"):
    """Lowest eigenvalues of ``u⁻¹Hu = -ε²Δ - 2u⁻¹ε∇u·ε∇ + W``.

    The operator is assembled densely and is not symmetric.

    Returns:
        ``(values, max_imag)``: real parts of the ``count`` eigenvalues with the
        smallest real part, ascending, and the largest imaginary part among them.
    """
    if grid.size > DENSE_LIMIT:
        raise TooLarge(f"dense conjugated spectrum needs n^d <= {DENSE_LIMIT}, got {grid.size}")
    v = grid.check(v_eff, "v_eff")
    land = solve_landscape(grid, v, tol=1e-13, scheme=scheme)
    u = land.u.ravel()
    eps2 = grid.eps**2
    op = eps2 * laplacian_matrix(grid, scheme)
    diffs = _difference_matrices(grid, scheme)
    for D in diffs:
        du = D @ u
        op -= 2.0 * eps2 * (du / u)[:, None] * D
    op[np.diag_indices_from(op)] += land.W.ravel()
    ev = np.linalg.eigvals(op)
    ev = ev[np.argsort(ev.real, kind="stable")][:count]
    max_imag = float(np.abs(ev.imag).max()) if ev.size else 0.0
    return ev.real.copy(), max_imag
