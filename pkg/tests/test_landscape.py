import math

import numpy as np
import pytest

from conftest import two_value
from lscf.errors import NonPositivePotential, TooLarge
from lscf.grid import build_grid, laplacian_matrix
from lscf.landscape import (
    conjugated_hamiltonian_spectrum, derivative_norms, landscape_residual, local_minima, solve_landscape,
)
from lscf.potential import gen_pw_potential, realize_on_grid


@pytest.mark.parametrize("eps", [0.01, 0.3])
def test_constant_potential(eps):
    g = build_grid(1, 4, 64, eps)
    res = solve_landscape(g, np.full(g.shape, 2.0))
    np.testing.assert_allclose(res.u, 0.5, atol=1e-13)
    np.testing.assert_allclose(res.W, 2.0, atol=1e-12)


@pytest.mark.parametrize("scheme", ["stencil2", "spectral"])
def test_two_value_matches_dense_solve(scheme):
    g = build_grid(1, 2, 64, 0.1)
    v = two_value(g)
    res = solve_landscape(g, v, tol=1e-12, scheme=scheme)
    A = g.eps**2 * laplacian_matrix(g, scheme) + np.diag(v)
    u = np.linalg.solve(A, np.ones(g.size))
    np.testing.assert_allclose(res.u, u, rtol=1e-9)
    assert res.residual <= 1e-12
    assert landscape_residual(g, v, res.u, scheme) <= 1e-12


def test_maximum_principle_bounds(rng):
    g = build_grid(2, 4, 32, 0.05)
    v = realize_on_grid(gen_pw_potential(3, 4, 2, 0.5, 1.0), g)
    u = solve_landscape(g, v, tol=1e-11).u
    assert u.min() > 0
    assert np.all(u <= 1 / v.min() + 1e-10)
    assert np.all(u >= 1 / v.max() - 1e-10)


def test_rejects_nonpositive_potential(grid1d):
    with pytest.raises(NonPositivePotential):
        solve_landscape(grid1d, np.zeros(grid1d.shape))


def test_local_minima_constant_and_single_well():
    assert local_minima(np.ones(16)) == []
    x = np.linspace(0, 1, 40, endpoint=False)
    W = 2 - np.exp(-((x - 0.312) ** 2) / 0.01)
    found = local_minima(W)
    assert len(found) == 1
    assert found[0][1] == (int(np.argmin(np.abs(x - 0.312))),)


def test_local_minima_brute_force(rng):
    W = rng.random((9, 7))
    expected = []
    for i in range(9):
        for j in range(7):
            nb = [W[(i + a) % 9, (j + b) % 7] for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
            if all(W[i, j] < w for w in nb):
                expected.append((W[i, j], (i, j)))
    assert local_minima(W) == sorted(expected)


def test_local_minima_on_landscape_is_sorted():
    g = build_grid(1, 16, 256, 0.05)
    W = solve_landscape(g, realize_on_grid(gen_pw_potential(4, 16, 1, 1.0, 0.3), g)).W
    vals = [w for w, _ in local_minima(W)]
    assert vals == sorted(vals) and len(vals) >= 2


def test_derivative_norms_single_mode(grid1d):
    g = grid1d
    x = g.coords()[0]
    k = 2 * np.pi / g.L
    grad, lap = derivative_norms(g, 2 + 0.1 * np.cos(k * x), 2)
    assert grad == pytest.approx(0.1 * k * math.sqrt(g.L / 2), rel=1e-12)
    assert lap == pytest.approx(0.1 * k**2 * math.sqrt(g.L / 2), rel=1e-12)
    assert derivative_norms(g, np.full(g.shape, 3.0), np.inf) == (0.0, 0.0)
    with pytest.raises(ValueError):
        derivative_norms(g, x, 1)


def test_derivative_norms_refinement():
    """Spectral norms of W agree with a fine-grid centered-difference estimate."""
    pw = gen_pw_potential(2, 4, 1, 1.0, 0.2)
    coarse = build_grid(1, 4, 256, 0.1)
    W = solve_landscape(coarse, realize_on_grid(pw, coarse), scheme="spectral").W
    grad, lap = derivative_norms(coarse, W, 2)
    fine = build_grid(1, 4, 2048, 0.1)
    Wf = solve_landscape(fine, realize_on_grid(pw, fine), tol=1e-11).W
    h = fine.h
    dW = (np.roll(Wf, -1) - np.roll(Wf, 1)) / (2 * h)
    d2W = (2 * Wf - np.roll(Wf, 1) - np.roll(Wf, -1)) / h**2
    assert grad == pytest.approx(np.sqrt(np.sum(dW**2) * h), rel=0.02)
    assert lap == pytest.approx(np.sqrt(np.sum(d2W**2) * h), rel=0.02)


def test_conjugated_spectrum_constant_potential():
    g = build_grid(1, 2, 32, 0.1)
    v = np.full(g.shape, 1.5)
    vals, imag = conjugated_hamiltonian_spectrum(g, v, 6)
    H = g.eps**2 * laplacian_matrix(g) + np.diag(v)
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(H)[:6], atol=1e-10)
    assert imag < 1e-8


def test_conjugated_spectrum_refinement_and_lower_bound():
    gaps = []
    for n in (64, 128):
        g = build_grid(1, 2, n, 0.1)
        v = two_value(g)
        vals, _ = conjugated_hamiltonian_spectrum(g, v, 4, "spectral")
        H = g.eps**2 * laplacian_matrix(g, "spectral") + np.diag(v)
        direct = np.linalg.eigvalsh(H)[:4]
        gaps.append(np.max(np.abs(vals - direct)))
        assert vals[0] >= v.min() - 1e-6
    assert gaps[1] <= gaps[0] / 3


def test_conjugated_spectrum_size_guard():
    g = build_grid(3, 1, 17, 0.1)
    with pytest.raises(TooLarge):
        conjugated_hamiltonian_spectrum(g, np.ones(g.shape), 2)
