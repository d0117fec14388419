"""Heat kernels, diffusion waves and Duhamel quadrature."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import erfc

from viscshock import kernels as k
from viscshock.errors import ConfigurationError, DomainError, PreconditionError


def _cole_hopf_wave(m, beta, gamma, a, x, t):
    # phi = -(beta/gamma) d/dx log theta, theta a heat solution with step data
    tau = t + 1.0
    xi = x - a * tau
    lam = gamma * m / beta
    s = np.sqrt(4 * beta * tau)
    theta = 1.0 + (np.exp(-lam) - 1.0) * 0.5 * erfc(-xi / s)
    theta_x = (np.exp(-lam) - 1.0) * np.exp(-(xi / s) ** 2) / (np.sqrt(np.pi) * s)
    return -(beta / gamma) * theta_x / theta


def _prop21_oracle(x, t):
    # K^2(y - s, s) = K(y - s, s/2) / (2 sqrt(2 pi s)); semigroup reduces the
    # double integral to one dimension
    def f(s):
        return k.heat_kernel_dx(x - s, t - s / 2) / (2 * np.sqrt(2 * np.pi))
    return quad(f, 0, t, weight="alg", wvar=(-0.5, 0), limit=400, epsabs=1e-14)[0]


# -- heat kernel ------------------------------------------------------------

def test_heat_kernel_unit_prefactor():
    assert k.heat_kernel(0.0, 1 / (4 * np.pi)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0, 100.0])
def test_heat_kernel_unit_mass(t):
    w = k.gaussian_halfwidth(t)
    x = np.linspace(-w, w, 200001)
    assert np.trapezoid(k.heat_kernel(x, t), x) == pytest.approx(1.0, abs=1e-8)


def test_heat_kernel_mass_on_fixed_window():
    x = np.linspace(-40, 40, 80001)
    assert abs(np.trapezoid(k.heat_kernel(x, 1.0), x) - 1.0) < 1e-10


@pytest.mark.parametrize("t1,t2", [(1, 1), (1, 4), (0.5, 2)])
def test_semigroup(t1, t2):
    y = np.linspace(-60, 60, 120001)
    for x in (0.0, 1.0, 3.0):
        conv = np.trapezoid(k.heat_kernel(x - y, t1) * k.heat_kernel(y, t2), y)
        assert abs(conv - k.heat_kernel(x, t1 + t2)) < 1e-8


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(DomainError):
        k.heat_kernel(0.0, 0.0)


def test_derivatives_match_finite_differences():
    x = np.linspace(-5, 5, 41)
    h = 1e-5
    fd = (k.heat_kernel(x + h, 2.0) - k.heat_kernel(x - h, 2.0)) / (2 * h)
    assert np.max(np.abs(fd - k.heat_kernel_dx(x, 2.0))) < 1e-9
    fdt = (k.heat_kernel(x, 2.0 + h) - k.heat_kernel(x, 2.0 - h)) / (2 * h)
    assert np.max(np.abs(fdt - k.heat_kernel_dt(x, 2.0))) < 1e-9


def test_derivative_bounds_have_single_constant():
    r = k.derivative_bound_ratios()
    for key in ("gx", "gt", "g"):
        vals = np.array(list(r[key].values()))
        assert vals.max() / vals.min() < 1 + 1e-6


def test_gaussian_shift_lemma_constant():
    r = k.stlem_ratio()
    vals = np.array(list(r.values()))
    assert np.all(vals <= np.exp(0.25) * (1 + 1e-12))
    assert vals.min() == pytest.approx(np.exp(0.25), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0.05, 50.0), beta=st.floats(0.2, 5.0))
def test_heat_kernel_mass_property(t, beta):
    w = k.gaussian_halfwidth(beta * t)
    x = np.linspace(-w, w, 20001)
    vals = k.heat_kernel(x, t, beta)
    assert np.all(vals >= 0)
    assert np.trapezoid(vals, x) == pytest.approx(1.0, abs=1e-9)


def test_errfn_limits():
    assert k.errfn(-50.0) == 0.0
    assert k.errfn(50.0) == 1.0
    assert k.errfn(0.0) == pytest.approx(0.5)


def test_gaussian_signal_translates():
    sig = k.GaussianSignal(speed=2.0, beta=0.5, start_time_shift=1.0)
    assert sig(6.0, 2.0) == pytest.approx(k.heat_kernel(0.0, 1.5))
    with pytest.raises(DomainError):
        sig(0.0, -1.0)


# -- diffusion waves --------------------------------------------------------

def test_zero_mass_wave_vanishes():
    p = k.DiffusionWaveParams(0.0, 1.0, 0.3, 1.0)
    assert np.all(k.diffusion_wave(p, np.linspace(-3, 3, 7), 2.0) == 0.0)


@pytest.mark.parametrize("t", [0.0, 1.0, 10.0])
def test_wave_mass(t):
    p = k.DiffusionWaveParams(0.1, 1.0, 0.0, 1.0)
    x = np.linspace(-80, 80, 160001)
    assert abs(np.trapezoid(k.diffusion_wave(p, x, t), x) - 0.1) < 1e-7


@pytest.mark.parametrize("m,beta,gamma,a", [(0.1, 1.0, 1.0, 0.0), (2.0, 2.0, 0.5, 1.0),
                                            (-0.8, 0.7, 1.5, -0.5)])
def test_wave_matches_cole_hopf(m, beta, gamma, a):
    p = k.DiffusionWaveParams(m, beta, a, gamma)
    x = np.linspace(-10, 10, 101)
    for t in (0.0, 3.0):
        assert np.allclose(k.diffusion_wave(p, x, t),
                           _cole_hopf_wave(m, beta, gamma, a, x, t), rtol=1e-12, atol=1e-15)


def test_wave_pde_residual_second_order():
    p = k.DiffusionWaveParams(0.1, 1.0, 0.0, 1.0)
    x = np.linspace(-5, 5, 11)
    t = 1.0

    def phi(x, t):
        return k.diffusion_wave(p, x, t)

    res = []
    for h in (0.1, 0.05, 0.025):
        ft = (phi(x, t + h) - phi(x, t - h)) / (2 * h)
        fxx = (phi(x + h, t) - 2 * phi(x, t) + phi(x - h, t)) / h**2
        f2x = (phi(x + h, t) ** 2 - phi(x - h, t) ** 2) / (2 * h)
        res.append(np.max(np.abs(ft - fxx + f2x)))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.3)


def test_linear_wave_is_heat_kernel():
    p = k.DiffusionWaveParams(0.4, 2.0, 1.5, 0.0)
    x = np.linspace(-5, 15, 21)
    assert np.allclose(k.diffusion_wave(p, x, 3.0), 0.4 * k.heat_kernel(x - 6.0, 4.0, 2.0))


def test_wave_derivative():
    p = k.DiffusionWaveParams(0.7, 1.3, -0.4, 0.9)
    x = np.linspace(-6, 6, 25)
    h = 1e-5
    fd = (k.diffusion_wave(p, x + h, 2.0) - k.diffusion_wave(p, x - h, 2.0)) / (2 * h)
    assert np.max(np.abs(fd - k.diffusion_wave_dx(p, x, 2.0))) < 1e-9


def test_wave_domain():
    with pytest.raises(DomainError):
        k.diffusion_wave(k.DiffusionWaveParams(1.0), 0.0, -1.0)


@settings(max_examples=25, deadline=None)
@given(m=st.floats(-2.0, 2.0), beta=st.floats(0.3, 3.0), gamma=st.floats(-2.0, 2.0),
       t=st.floats(0.0, 20.0))
def test_wave_mass_property(m, beta, gamma, t):
    p = k.DiffusionWaveParams(m, beta, 0.0, gamma)
    w = k.gaussian_halfwidth(beta * (t + 1)) + 10
    x = np.linspace(-w, w, 40001)
    assert np.trapezoid(k.diffusion_wave(p, x, t), x) == pytest.approx(m, abs=1e-9)


# -- Duhamel quadrature -----------------------------------------------------

def test_time_quadrature_second_order():
    def errors(n):
        nodes, w = k.time_quadrature(10.0, n, 1e-3, 0.5)
        e1 = abs(np.sum(w / np.sqrt(nodes)) / (2 * np.sqrt(10.0)) - 1)
        e2 = abs(np.sum(w * np.sqrt(nodes)) / (2 / 3 * 10.0**1.5) - 1)
        nodes, w = k.time_quadrature(10.0, n, 1e-3, 0.0)
        e3 = abs(np.sum(w * np.cos(nodes)) - np.sin(10.0))
        return np.array([e1, e2, e3])

    coarse, fine = errors(64), errors(128)
    assert np.all(fine < 1e-3)
    assert np.all(coarse / fine > 2.5)


def test_zero_mass_source_gives_zero():
    src = k.DiffusionWaveSquaredSource(k.DiffusionWaveParams(0.0))
    ker = k.GaussianSignal()
    grid = k.QuadratureGrid.for_problem(ker, k.SquaredGaussianSource(), 4.0)
    x, u = k.duhamel_convolve(ker, src, grid, 4.0, check=False)
    assert np.all(u == 0.0)


@pytest.mark.parametrize("t", [1.0, 16.0])
def test_duhamel_squared_source_matches_reduction(t):
    ker = k.GaussianSignal()
    src = k.SquaredGaussianSource(speed=1.0)
    grid = k.QuadratureGrid.for_problem(ker, src, t)
    x, u = k.duhamel_convolve(ker, src, grid, t)
    xs = np.linspace(-2 * np.sqrt(t) - 2, t + 2 * np.sqrt(t) + 2, 15)
    exact = np.array([_prop21_oracle(xi, t) for xi in xs])
    assert np.max(np.abs(np.interp(xs, x, u) - exact)) < 1e-3 * np.max(np.abs(exact))


def test_duhamel_derivative_source_closed_form():
    # int_0^t K_xx(x - s, t) ds = K_x(x, t) - K_x(x - t, t)
    t = 16.0
    ker = k.GaussianSignal()
    src = k.GaussianDerivativeSource(speed=1.0)
    grid = k.QuadratureGrid.for_problem(ker, src, t)
    x, u = k.duhamel_convolve(ker, src, grid, t)
    exact = k.heat_kernel_dx(x, t) - k.heat_kernel_dx(x - t, t)
    assert np.max(np.abs(u - exact)) < 1e-3 * np.max(np.abs(exact))


def test_duhamel_same_sign_decays_exponentially_at_origin():
    ker = k.GaussianSignal(speed=1.0)
    src = k.SquaredGaussianSource(speed=1.0)
    times = np.array([8.0, 12.0, 16.0, 20.0, 24.0])
    vals = []
    for t in times:
        grid = k.QuadratureGrid.for_problem(ker, src, t)
        x, u = k.duhamel_convolve(ker, src, grid, t)
        vals.append(abs(np.interp(0.0, x, u)))
    from viscshock.fitting import exponential_fit
    assert exponential_fit(times, vals).rate > 0.1


def test_duhamel_rejects_narrow_grid():
    ker = k.GaussianSignal()
    src = k.SquaredGaussianSource(speed=1.0)
    grid = k.QuadratureGrid(-5, 5, 101, [16.0])
    with pytest.raises(ConfigurationError):
        k.duhamel_convolve(ker, src, grid, 16.0)


def test_envelope_ratio_frozen_values():
    # oracle: one-dimensional reduction evaluated by adaptive quadrature
    for t, x in ((64.0, 32.0), (64.0, -10.0), (1.0, 0.0)):
        r = abs(_prop21_oracle(x, t)) / float(k.prop21_bound(x, t))
        assert np.isfinite(r) and r > 0
    res = k.verify_prop21(t_list=(1, 4, 16, 64))
    assert res.fitted_C == pytest.approx(0.46484, rel=2e-3)
    assert res.ratio_max[0] == pytest.approx(0.23330, rel=2e-3)


def test_envelope_requires_late_times():
    with pytest.raises(PreconditionError):
        k.verify_prop21(t_list=(0.5, 1.0))


def test_lp_rates_on_heat_kernel():
    snaps = {}
    for t in (16.0, 32.0, 64.0, 128.0, 256.0):
        x = np.linspace(-200, 200, 40001)
        snaps[t] = (x, k.heat_kernel(x, t))
    assert k.lp_norm_rates(snaps, 2).slope == pytest.approx(-0.25, abs=0.01)
    assert k.lp_norm_rates(snaps, np.inf).slope == pytest.approx(-0.5, abs=0.01)


def test_lp_rates_exact_power_law():
    x = np.linspace(0, 1, 11)
    snaps = {t: (x, np.full_like(x, t ** -0.75)) for t in (1.0, 2.0, 4.0, 8.0)}
    assert k.lp_norm_rates(snaps, np.inf).slope == pytest.approx(-0.75, abs=1e-12)
    with pytest.raises(PreconditionError):
        k.lp_norm_rates({1.0: snaps[1.0]}, 1)


# -- Howard's lemma ----------------------------------------------------------

def test_howard_constant_function():
    s = np.linspace(0, 40, 400001)
    res = k.howard_bound_check(s, np.ones_like(s), 1.0, 0.0, 2.0)
    assert res.lhs == pytest.approx(np.sqrt(np.pi) / 2, abs=1e-8)


def test_howard_critical_gaussian_bounded():
    s = np.linspace(0, 60, 600001)
    for z in (1, 2, 4, 8, 16):
        assert k.howard_bound_check(s, np.exp(-s**2 / 8), 1.0, z, 2.0).passed


def test_howard_algebraic_passes():
    s = np.linspace(0, 200, 400001)
    assert k.howard_bound_check(s, (1 + s) ** -0.5, 4.0, 16.0, 2.0).passed


def test_howard_rejects_increasing():
    s = np.linspace(0, 1, 11)
    with pytest.raises(PreconditionError):
        k.howard_bound_check(s, s, 1.0, 1.0, 2.0)


# -- interaction estimates ---------------------------------------------------

def test_product_rate_matches_closed_form():
    # sup_x K(x - t, t) K(x + t, t) = exp(-t/2) / (4 pi t)
    res = k.interaction_lemma_check("product", {"a1": 1.0, "a2": -1.0}, (8.0, 40.0))
    exact = np.exp(-res.times / 2) / (4 * np.pi * res.times)
    assert np.allclose(res.values, exact, rtol=1e-6)
    assert res.passed and res.fit.rate == pytest.approx(0.5, rel=0.2)


def test_product_rejects_equal_speeds():
    with pytest.raises(PreconditionError):
        k.interaction_lemma_check("product", {"a1": 1.0, "a2": 1.0})


def test_cross_opposite_signs_power():
    res = k.interaction_lemma_check("cross", {"a": 1.0, "b": -1.0}, (16.0, 256.0))
    assert res.law == "power"
    assert res.fit.slope == pytest.approx(-0.5, abs=0.05)


def test_cross_same_sign_exponential():
    res = k.interaction_lemma_check("cross", {"a": 1.0, "b": 1.0}, (4.0, 40.0))
    assert res.law == "exponential" and res.fit.rate > 0


def test_weighted_and_exp_modes():
    assert k.interaction_lemma_check("weighted", {"a": 1.0}, (4.0, 40.0)).fit.rate > 0
    res = k.interaction_lemma_check("exp", {"a": 1.0}, (4.0, 40.0))
    assert res.fit.rate > 0
    scaled = res.values * np.sqrt(res.times) * np.exp(res.fit.rate * res.times)
    assert scaled.max() / scaled.min() < 3.0
    with pytest.raises(PreconditionError):
        k.interaction_lemma_check("exp", {"a": 0.0})
