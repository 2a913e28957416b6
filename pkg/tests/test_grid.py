import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lscf.errors import BadDimension, GridMismatch, NonAlignedGrid, NonNeutralSource
from lscf.grid import (
    build_grid, gradient, integrate, laplacian_apply, laplacian_matrix, laplacian_symbol, lp_norm, poisson_solve,
    sobolev_norm,
)


def test_build_grid_spacing():
    assert build_grid(1, 4, 64, 0.05).h == 0.0625
    g = build_grid(3, 2, 16, 0.1)
    assert g.h == 0.125 and g.shape == (16, 16, 16) and g.size == 4096


@pytest.mark.parametrize("args, exc", [
    ((1, 4, 63, 0.05), NonAlignedGrid),
    ((4, 4, 64, 0.05), BadDimension),
    ((0, 4, 64, 0.05), BadDimension),
    ((1, 0, 64, 0.05), NonAlignedGrid),
    ((1, 4, 64, 0.0), ValueError),
])
def test_build_grid_rejects(args, exc):
    with pytest.raises(exc):
        build_grid(*args)


def test_check_shape_and_finiteness(grid1d):
    with pytest.raises(GridMismatch):
        grid1d.check(np.zeros(10))
    with pytest.raises(ValueError):
        grid1d.check(np.full(64, np.nan))
    assert grid1d.check(np.zeros(64)).shape == (64,)


def test_fourier_table_has_single_zero_mode():
    g = build_grid(2, 3, 12, 0.1)
    assert np.count_nonzero(g.k2 == 0) == 1
    assert g.k2.size == g.size
    # Folded to the symmetric Nyquist range.
    assert np.max(np.abs(g.k1)) <= math.pi / g.h + 1e-12


@pytest.mark.parametrize("scheme", ["stencil2", "spectral"])
def test_laplacian_of_constant_vanishes(scheme):
    g = build_grid(2, 2, 8, 0.1)
    np.testing.assert_allclose(laplacian_apply(g, np.full(g.shape, 3.7), scheme), 0.0, atol=1e-12)


def test_stencil_eigenfield(grid1d):
    g = grid1d
    x = g.coords()[0]
    f = np.cos(2 * np.pi * x / g.L)
    lam = (2 - 2 * np.cos(2 * np.pi * g.h / g.L)) / g.h**2
    np.testing.assert_allclose(laplacian_apply(g, f, "stencil2"), lam * f, atol=1e-11)


@pytest.mark.parametrize("d, n", [(1, 32), (2, 8), (3, 4)])
@pytest.mark.parametrize("scheme", ["stencil2", "spectral"])
def test_laplacian_matches_dense_matrix(d, n, scheme, rng):
    g = build_grid(d, 2, n, 0.1)
    f = rng.standard_normal(g.shape)
    A = laplacian_matrix(g, scheme)
    np.testing.assert_allclose(laplacian_apply(g, f, scheme).ravel(), A @ f.ravel(), atol=1e-9)


def test_sparse_stencil_matches_dense():
    g = build_grid(2, 2, 8, 0.1)
    np.testing.assert_allclose(laplacian_matrix(g, "stencil2", sparse=True).toarray(), laplacian_matrix(g))
    with pytest.raises(ValueError):
        laplacian_matrix(g, "spectral", sparse=True)


def test_bloch_shift_symbol_matches_matrix():
    g = build_grid(1, 2, 16, 0.1)
    theta = 0.7
    A = laplacian_matrix(g, "spectral", shift=[theta])
    lam = np.sort(np.linalg.eigvalsh(A))
    np.testing.assert_allclose(lam, np.sort(laplacian_symbol(g, "spectral", shift=[theta])), atol=1e-9)


def test_stencil_converges_to_spectral_at_second_order():
    errors = []
    for n in (32, 64):
        g = build_grid(1, 4, n, 0.1)
        f = np.sin(2 * np.pi * 3 * g.coords()[0] / g.L)
        errors.append(np.max(np.abs(laplacian_apply(g, f, "stencil2") - laplacian_apply(g, f, "spectral"))))
    assert 3.5 <= errors[0] / errors[1] <= 4.5


def test_poisson_single_mode(grid1d):
    g = grid1d
    x = g.coords()[0]
    phi = poisson_solve(g, np.cos(2 * np.pi * x / g.L))
    np.testing.assert_allclose(phi, (g.L / (2 * np.pi)) ** 2 * np.cos(2 * np.pi * x / g.L), atol=1e-13)
    np.testing.assert_array_equal(poisson_solve(g, np.zeros(g.shape)), 0.0)


def test_poisson_round_trip(rng):
    g = build_grid(1, 4, 64, 0.1)
    src = rng.standard_normal(g.shape)
    src -= src.mean()
    phi = poisson_solve(g, src)
    assert abs(phi.mean()) < 1e-14
    res = laplacian_apply(g, phi, "spectral") - src
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(src)


def test_poisson_rejects_net_charge(grid1d):
    with pytest.raises(NonNeutralSource):
        poisson_solve(grid1d, np.ones(grid1d.shape))


@given(st.integers(0, 2**32 - 1))
def test_poisson_inverts_laplacian_on_mean_zero(seed):
    g = build_grid(2, 2, 8, 0.1)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    f -= f.mean()
    back = poisson_solve(g, laplacian_apply(g, f, "spectral"))
    assert np.linalg.norm(back - f) <= 1e-12 * np.linalg.norm(f) + 1e-14


def test_sobolev_constant_and_single_mode(grid1d):
    g = grid1d
    assert sobolev_norm(g, np.full(g.shape, 2.0), 0) == pytest.approx(2.0 * math.sqrt(g.L))
    f = np.cos(2 * np.pi * g.coords()[0] / g.L)
    ratio = sobolev_norm(g, f, 1) ** 2 / sobolev_norm(g, f, 0) ** 2
    assert ratio == pytest.approx(1 + (2 * np.pi / g.L) ** 2, rel=1e-13)
    assert sobolev_norm(g, f, 0) == pytest.approx(lp_norm(g, f, 2), rel=1e-13)


def test_sobolev_negative_index_matches_direct_dft(rng):
    g = build_grid(1, 3, 24, 0.1)
    f = rng.standard_normal(g.shape)
    m = np.arange(g.n)
    dft = np.exp(-2j * np.pi * np.outer(m, m) / g.n) @ f
    k = 2 * np.pi * np.where(m <= g.n // 2, m, m - g.n) / g.L
    expected = np.sqrt(np.sum((1 + k**2) ** -2 * np.abs(dft) ** 2) * g.L / g.n**2)
    assert sobolev_norm(g, f, -2) == pytest.approx(expected, rel=1e-12)


def test_homogeneous_norm_drops_zero_mode(grid1d):
    g = grid1d
    f = 5.0 + np.cos(2 * np.pi * g.coords()[0] / g.L)
    k = 2 * np.pi / g.L
    assert sobolev_norm(g, f, -1, homogeneous=True) == pytest.approx(
        sobolev_norm(g, f - 5.0, 0) / k, rel=1e-13)


def test_lp_norms(grid1d):
    g = grid1d
    c = np.full(g.shape, -3.0)
    assert lp_norm(g, c, 2) == pytest.approx(3.0 * math.sqrt(g.L))
    assert lp_norm(g, c, np.inf) == 3.0
    assert integrate(g, c) == pytest.approx(-3.0 * g.L)
    with pytest.raises(ValueError):
        lp_norm(g, c, 0.5)


def test_lp4_refinement():
    vals = []
    for n in (64, 4096):
        g = build_grid(1, 2, n, 0.1)
        x = g.coords()[0]
        vals.append(lp_norm(g, np.sin(np.pi * x) + 0.3 * np.cos(3 * np.pi * x), 4))
    assert vals[0] == pytest.approx(vals[1], rel=1e-10)


def test_gradient_single_mode(grid1d):
    g = grid1d
    x = g.coords()[0]
    (dx,) = gradient(g, np.sin(2 * np.pi * x / g.L))
    np.testing.assert_allclose(dx, 2 * np.pi / g.L * np.cos(2 * np.pi * x / g.L), atol=1e-12)


def test_operations_are_deterministic(rng):
    g = build_grid(2, 2, 8, 0.1)
    f = rng.standard_normal(g.shape)
    f -= f.mean()
    assert np.array_equal(poisson_solve(g, f), poisson_solve(g, f.copy()))
    assert sobolev_norm(g, f, 2) == sobolev_norm(g, f.copy(), 2)
