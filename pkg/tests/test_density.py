import math

import mpmath
import numpy as np
import pytest
import scipy.integrate as si
from hypothesis import given
from hypothesis import strategies as st

from conftest import two_value
from lscf.analysis import SystemSpec, build_system
from lscf.density import (
    DensityMap, EigenSolveConfig, ThermoState, density_lsc, density_pl, density_rehf, fermi_dirac, fermi_dirac_deriv,
    RehfResponse, fermi_divided_difference, fermi_integral, fermi_integral_deriv, landscape_cache, rehf_spectrum,
)
from lscf.errors import NonPositivePotential, TooLarge
from lscf.grid import build_grid, laplacian_symbol, lp_norm
from lscf.landscape import solve_landscape
from lscf.potential import gen_pw_potential, realize_on_grid


def polylog_fermi_integral(a, beta, eps, d):
    """Closed form ``(2πε)^{-d} π^{d/2} β^{-d/2} (-Li_{d/2}(-e^{-βa}))`` in high precision."""
    mpmath.mp.dps = 40
    val = -mpmath.re(mpmath.polylog(mpmath.mpf(d) / 2, -mpmath.exp(-mpmath.mpf(beta) * a)))
    return float(mpmath.pi ** (mpmath.mpf(d) / 2) * mpmath.mpf(beta) ** (-mpmath.mpf(d) / 2) * val
                 / (2 * mpmath.pi * eps) ** d)


def test_fermi_dirac_basics():
    assert fermi_dirac(0.0) == 0.5
    x = np.linspace(-50, 50, 101)
    np.testing.assert_allclose(fermi_dirac(x) + fermi_dirac(-x), 1.0, rtol=0, atol=1e-15)
    big = fermi_dirac(745.0)
    assert big > 0 and big == math.exp(-745.0) / (1 + math.exp(-745.0))
    assert np.all(np.isfinite(fermi_dirac(np.array([-1e308, 1e308]))))
    np.testing.assert_allclose(fermi_dirac_deriv(x), -fermi_dirac(x) * (1 - fermi_dirac(x)), atol=1e-16)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("a, beta", [(0.5, 2.0), (-0.3, 20.0), (0.0, 1.0), (0.05, 40.0)])
def test_fermi_integral_matches_polylog(d, a, beta):
    eps = 0.05
    assert fermi_integral(a, beta, eps, d) == pytest.approx(polylog_fermi_integral(a, beta, eps, d), rel=1e-8)


def test_fermi_integral_matches_adaptive_quadrature():
    beta, a, eps, d = 2.0, 0.5, 0.05, 3
    val, _ = si.quad(lambda q: q**2 * fermi_dirac(beta * (q * q + a)), 0, np.inf, epsabs=0, epsrel=1e-13)
    assert fermi_integral(a, beta, eps, d) == pytest.approx(4 * math.pi * val / (2 * math.pi * eps) ** 3, rel=1e-8)


def test_fermi_integral_zero_temperature_limit():
    eps = 0.1
    ball = (2 * math.pi * eps) ** -3 * 4 * math.pi / 3
    assert fermi_integral(-1.0, 1e4, eps, 3) == pytest.approx(ball, rel=0.01)


def test_fermi_integral_tail_is_negligible():
    beta, eps = 3.0, 0.1
    val = fermi_integral(50.0 / beta, beta, eps, 3)
    assert 0 < val < math.exp(-40) * (2 * math.pi * eps) ** -3 * 4 * math.pi


def test_fermi_integral_vectorized_and_decreasing():
    a = np.linspace(-1, 1, 41)
    vals = fermi_integral(a, 10.0, 0.1, 2)
    assert vals.shape == a.shape and np.all(np.diff(vals) < 0) and np.all(vals > 0)
    assert vals[7] == pytest.approx(fermi_integral(float(a[7]), 10.0, 0.1, 2), rel=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_fermi_integral_deriv_matches_finite_difference(d):
    a, beta, eps, h = 0.3, 5.0, 0.1, 1e-5
    fd = (fermi_integral(a + h, beta, eps, d, 1e-13) - fermi_integral(a - h, beta, eps, d, 1e-13)) / (2 * h)
    der = fermi_integral_deriv(a, beta, eps, d)
    assert der < 0
    assert der == pytest.approx(fd, rel=1e-6)
    assert abs(fermi_integral_deriv(60.0, beta, eps, d)) < 1e-100


@given(st.floats(-2.0, 2.0), st.floats(0.5, 100.0), st.integers(1, 3))
def test_fermi_integral_positive_and_bounded(a, beta, d):
    eps = 0.1
    val = fermi_integral(a, beta, eps, d)
    assert val > 0
    # f_FD(x) <= e^{-x} gives the Boltzmann bound (2πε)^{-d} (π/β)^{d/2} e^{-βa}.
    assert val <= (2 * math.pi * eps) ** -d * (math.pi / beta) ** (d / 2) * math.exp(-beta * a) * (1 + 1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        EigenSolveConfig(method="qr")
    with pytest.raises(ValueError):
        EigenSolveConfig(tail_tol=1.0)
    with pytest.raises(ValueError):
        ThermoState(beta=0.0, mu=0.0)


@pytest.mark.parametrize("scheme", ["stencil2", "spectral"])
def test_rehf_constant_potential_mode_sum(scheme):
    g = build_grid(1, 4, 64, 0.1)
    th = ThermoState(beta=8.0, mu=2.1)
    rho = density_rehf(g, np.full(g.shape, 2.0), np.zeros(g.shape), th, scheme=scheme)
    modes = g.eps**2 * laplacian_symbol(g, scheme) + 2.0
    expected = np.sum(fermi_dirac(th.beta * (modes - th.mu))) / g.L
    np.testing.assert_allclose(rho, expected, rtol=1e-10)
    assert rho.dtype == np.float64


def test_rehf_kpoint_average_of_constant_potential():
    g = build_grid(1, 2, 16, 0.2)
    th = ThermoState(beta=5.0, mu=1.5)
    cfg = EigenSolveConfig(method="dense", kpoints=3)
    rho = density_rehf(g, np.full(g.shape, 1.0), np.zeros(g.shape), th, cfg, "spectral")
    total = 0.0
    for t in 2 * np.pi / g.L * np.arange(3) / 3:
        modes = g.eps**2 * laplacian_symbol(g, "spectral", shift=[t]) + 1.0
        total += np.sum(fermi_dirac(th.beta * (modes - th.mu))) / g.L
    np.testing.assert_allclose(rho, total / 3, rtol=1e-10)


def test_rehf_lanczos_matches_dense():
    g = build_grid(1, 4, 96, 0.05)
    V = realize_on_grid(gen_pw_potential(5, 4, 1, 1.0, 0.2), g)
    th = ThermoState(beta=40.0, mu=1.05)
    phi = 0.02 * np.sin(2 * np.pi * g.coords()[0] / g.L)
    dense = density_rehf(g, V, phi, th, EigenSolveConfig(method="dense"))
    for scheme in ("stencil2", "spectral"):
        dense = density_rehf(g, V, phi, th, EigenSolveConfig(method="dense"), scheme)
        lanczos = density_rehf(g, V, phi, th, EigenSolveConfig(method="lanczos"), scheme)
        assert lp_norm(g, lanczos - dense, 2) <= 1e-8 * lp_norm(g, dense, 2)


def test_rehf_too_large_for_dense():
    g = build_grid(3, 1, 17, 0.1)
    with pytest.raises(TooLarge):
        rehf_spectrum(g, np.ones(g.shape), "spectral", EigenSolveConfig(method="dense"))


def test_dilation_symmetry():
    g = build_grid(1, 4, 64, 0.1)
    V = two_value(g)
    phi = 0.05 * np.cos(2 * np.pi * g.coords()[0] / g.L)
    t, beta, mu, vcut = 0.3, 10.0, 1.0, 0.6
    base = ThermoState(beta, mu, vcut)
    shifted = ThermoState(beta, mu - t, vcut)
    for fn in (density_rehf, density_lsc):
        a = fn(g, V, phi, base)
        b = fn(g, V, phi + t, shifted)
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))
    defect = density_pl(g, V, phi + t, shifted) - density_pl(g, V, phi, base)
    assert lp_norm(g, defect, 2) > 1e-3


def test_pl_constant_landscape():
    g = build_grid(1, 4, 64, 0.1)
    c, t, vcut = 2.0, 0.3, 1.0
    th = ThermoState(6.0, 1.2, vcut)
    rho = density_pl(g, np.full(g.shape, c), np.full(g.shape, t), th)
    np.testing.assert_allclose(rho, fermi_integral(c - t - th.mu, th.beta, g.eps, 1), rtol=1e-9)
    with pytest.raises(NonPositivePotential):
        density_pl(g, np.full(g.shape, c), np.full(g.shape, 1.5), th)


def test_lsc_constant_potential():
    g = build_grid(2, 2, 16, 0.1)
    th = ThermoState(6.0, 1.2, 1.0)
    rho = density_lsc(g, np.full(g.shape, 2.0), np.zeros(g.shape), th)
    np.testing.assert_allclose(rho, fermi_integral(2.0 - th.mu, th.beta, g.eps, 2), rtol=1e-9)


def test_lsc_landscape_is_cached():
    landscape_cache.clear()
    g = build_grid(1, 4, 64, 0.1)
    V = two_value(g)
    dm = DensityMap("lsc", g, V, 10.0, 0.6)
    W = dm.W2
    assert dm.W2 is W
    again = DensityMap("lsc", g, V.copy(), 10.0, 0.6)
    assert again.W2 is W
    np.testing.assert_allclose(W, solve_landscape(g, V - 0.6, tol=1e-12).W, rtol=1e-10)


@pytest.mark.parametrize("model", ["rehf", "pl", "lsc"])
def test_positive_real_and_monotone_in_mu(model, rng):
    g = build_grid(1, 4, 64, 0.1)
    V = two_value(g)
    phi = 0.05 * np.sin(2 * np.pi * g.coords()[0] / g.L)
    dm = DensityMap(model, g, V, 10.0, 0.6)
    frozen = dm.freeze(phi)
    mus = np.sort(rng.uniform(0.6, 1.6, 20))
    thetas = []
    for mu in mus:
        rho = frozen.density(mu)
        assert np.isrealobj(rho) and np.all(rho > 0)
        assert rho.max() < fermi_integral(float(V.min() - phi.max() - mu) - 1.0, 10.0, g.eps, 1)
        thetas.append(rho.mean())
        assert frozen.density(mu + 0.01).mean() > rho.mean()
    assert np.all(np.diff(thetas) > 0)


def test_models_agree_on_constant_potential_up_to_stencil_gap():
    gaps = []
    for n in (32, 64):
        g = build_grid(1, 4, n, 0.1)
        V = np.full(g.shape, 2.0)
        th = ThermoState(8.0, 2.2, 1.8)
        zero = np.zeros(g.shape)
        lsc = density_lsc(g, V, zero, th)
        np.testing.assert_allclose(density_pl(g, V, zero, th), lsc, rtol=1e-10)
        gaps.append(abs(density_rehf(g, V, zero, th, scheme="stencil2")[0] - lsc[0]))
    assert 3.5 <= gaps[0] / gaps[1] <= 4.5


def test_lsc_approaches_rehf_as_eps_shrinks_at_fixed_beta():
    errs = []
    for eps in (0.08, 0.02):
        s = build_system(SystemSpec(L=8, n=256, eps=eps, beta=15.0))
        zero = np.zeros(s.grid.shape)
        r = DensityMap("rehf", s.grid, s.V, s.beta, s.v_cut, "spectral")(zero, 1.0)
        c = DensityMap("lsc", s.grid, s.V, s.beta, s.v_cut, "spectral")(zero, 1.0)
        errs.append(lp_norm(s.grid, r - c, 2) / lp_norm(s.grid, r, 2))
    assert errs[1] < errs[0]


def test_frozen_density_dmu_matches_difference():
    g = build_grid(1, 4, 64, 0.1)
    V = two_value(g)
    for model in ("rehf", "pl", "lsc"):
        frozen = DensityMap(model, g, V, 10.0, 0.6).freeze(np.zeros(g.shape))
        h = 1e-6
        fd = (frozen.density(1.0 + h) - frozen.density(1.0 - h)) / (2 * h)
        np.testing.assert_allclose(frozen.density_dmu(1.0), fd, rtol=1e-5)


def test_fermi_divided_difference():
    x = np.array([-30.0, -2.0, 0.0, 0.5, 3.0, 700.0])
    y = np.array([-29.0, -2.0 + 1e-9, 1.0, 0.5, -4.0, 650.0])
    with mpmath.workdps(50):
        fd = lambda a: 1 / (1 + mpmath.exp(a))  # noqa: E731
        ref = [float((fd(a) - fd(b)) / (mpmath.mpf(a) - b)) if a != b else fermi_dirac_deriv(a)
               for a, b in zip(x.tolist(), y.tolist())]
    np.testing.assert_allclose(fermi_divided_difference(x, y), ref, rtol=1e-12)
    np.testing.assert_allclose(fermi_divided_difference(x, x), fermi_dirac_deriv(x), rtol=1e-12, atol=1e-300)


def test_rehf_response_matches_finite_difference(rng):
    g = build_grid(1, 4, 64, 0.1)
    V = two_value(g)
    beta, mu = 20.0, 1.1
    resp = RehfResponse(g, V, "stencil2", beta, mu)
    dv = rng.standard_normal(g.shape)
    h = 1e-5
    th = ThermoState(beta, mu)
    fd = (density_rehf(g, V, -h * dv, th) - density_rehf(g, V, h * dv, th)) / (2 * h)
    assert np.linalg.norm(resp.apply(dv) - fd) <= 1e-8 * np.linalg.norm(fd)
