"""Scattering coefficients, excited kernels and the scattered Gaussian sum."""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from viscshock import greenfn as G
from viscshock import models as M
from viscshock import profile as P
from viscshock.errors import BasisError, DomainError, PreconditionError


def _kernel(name):
    model = M.get_model(name)
    prof = P.solve_profile(model)
    fam = P.profile_family(model, prof)
    sm, sp = M.endstate_spectrum(model, prof.u_minus), M.endstate_spectrum(model, prof.u_plus)
    return G.build_ekernel(sm, sp, fam)


@pytest.fixture(scope="module")
def lax2():
    return _kernel("quadratic2")


@pytest.fixture(scope="module")
def burgers_kernel():
    model = M.burgers()
    sm, sp = M.endstate_spectrum(model, [1.0]), M.endstate_spectrum(model, [-1.0])
    fam = SimpleNamespace(masses=[np.array([-2.0])], directions=[None])
    return G.build_ekernel(sm, sp, fam)


def test_burgers_scattering(burgers_kernel):
    sc = burgers_kernel.coefficients
    assert sc.c_stationary[("minus", 0, 0)] == pytest.approx(-0.5)
    assert sc.c_stationary[("plus", 0, 0)] == pytest.approx(-0.5)
    assert sc.c_out_minus == {} and sc.c_out_plus == {}


def test_identity_basis():
    e = np.eye(3)
    c = G.solve_scattering([e[:, 0]], [e[:, 1]], [e[:, 2]], e[:, 1])
    assert np.array_equal(c, [0.0, 1.0, 0.0])


def test_random_basis_reconstruction():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    r = rng.normal(size=3)
    c = G.solve_scattering([A[:, 0]], [], [A[:, 1], A[:, 2]], r)
    assert np.max(np.abs(A @ c - r)) < 1e-10


def test_singular_basis_rejected():
    with pytest.raises(BasisError):
        G.solve_scattering([np.array([1.0, 0.0])], [], [np.array([2.0, 0.0])],
                           np.array([0.0, 1.0]))
    with pytest.raises(BasisError):
        G.solve_scattering([], [], [np.array([1.0, 0.0])], np.array([0.0, 1.0]))


@pytest.mark.parametrize("name", ["quadratic2", "cubic", "ns_shock"])
def test_reconstruction_and_pi_identity(name):
    ek = _kernel(name)
    assert ek.coefficients.residual < 1e-10
    assert G.pi_identity_defect(ek.fields_minus, ek.fields_plus, ek.coefficients) < 1e-8


def test_e_large_time_limit(lax2):
    sc = lax2.coefficients
    limit = sum(sc.c_stationary[("minus", f.k, 0)] * f.l for f in lax2.fields_minus
                if f.speed > 0)
    assert np.allclose(G.eval_e(lax2, 0, -1.0, 1e4), limit, atol=1e-12)
    assert np.allclose(limit, sc.pi[0], atol=1e-10)


def test_e_small_time_limit(lax2):
    assert np.max(np.abs(G.eval_e(lax2, 0, -1.0, 1e-4))) < 1e-12


def test_e_continuity_lax(lax2):
    assert G.e_jump(lax2, 0, 1.0) < 1e-8


def test_e_continuity_closes_at_late_times():
    ek = _kernel("cubic")
    jumps = [max(G.e_jump(ek, i, t) for i in range(ek.ell)) for t in (16.0, 256.0, 4096.0)]
    assert jumps[0] > jumps[1] > jumps[2]
    assert jumps[2] < 1e-8


def test_e_derivative_closed_form(lax2):
    y = np.linspace(-20, -0.5, 40)
    h = 1e-5
    fd = (G.eval_e(lax2, 0, y + h, 9.0) - G.eval_e(lax2, 0, y - h, 9.0)) / (2 * h)
    assert np.max(np.abs(fd - G.eval_e_y(lax2, 0, y, 9.0))) < 1e-8


def test_e_domain(lax2):
    with pytest.raises(DomainError):
        G.eval_e(lax2, 0, -1.0, 0.0)
    with pytest.raises(PreconditionError):
        G.eval_e(lax2, 3, -1.0, 1.0)


@pytest.mark.parametrize("p", [1, 2, np.inf])
def test_kernel_decay_exponents(lax2, p):
    kd = G.verify_kernel_decay(lax2, p)
    assert kd.passed
    base = -0.5 * (1 - (0 if np.isinf(p) else 1 / p))
    assert kd.fits["e_y"].slope == pytest.approx(base, abs=0.08)
    assert kd.fits["e_ty"].slope == pytest.approx(base - 0.5, abs=0.08)


def test_s_far_field_is_pure_gaussian_sum(lax2):
    fm, fp, sc = lax2.fields_minus, lax2.fields_plus, lax2.coefficients
    t, y, x = 4.0, -30.0, -60.0
    S = G.eval_S(fm, fp, sc, x, t, y)
    first = sum(np.outer(f.r, f.l) * float(G.heat_kernel(x - y - f.speed * t, f.beta * t))
                for f in fm)
    assert np.allclose(S, first, atol=1e-14)


def test_s_vanishes_before_unit_time(lax2):
    S = G.eval_S(lax2.fields_minus, lax2.fields_plus, lax2.coefficients, 0.5, 0.5, -1.0)
    assert np.all(S == 0)


def test_s_jump_across_origin_is_lower_order(lax2):
    # the one-sided formulas agree only asymptotically: the jump decays
    # like 1/t while S itself decays like t^(-1/2)
    fm, fp, sc = lax2.fields_minus, lax2.fields_plus, lax2.coefficients
    rel = []
    for t in (16.0, 256.0):
        xs = np.linspace(-1.2 * t - 10, 1.2 * t + 10, 401)
        jump = max(np.max(np.abs(G.eval_S(fm, fp, sc, x, t, -1e-12)
                                 - G.eval_S(fm, fp, sc, x, t, 1e-12))) for x in xs)
        size = max(np.max(np.abs(G.eval_S(fm, fp, sc, x, t, -1e-12))) for x in xs)
        rel.append(jump / size)
    assert rel[1] < rel[0] / 3


def test_beta_bar_at_origin():
    assert G.beta_bar(3.0, 2.0, 0.7, 0.0, 1.0, 1.3, 5.0) == pytest.approx(3.0 / 10.0 * 0.7)


def test_z_vanishes_on_characteristic():
    assert G.z_jk(-2.0, 0.5, -4.0, 8.0) == 0.0


def test_s_bound_constants_stable(lax2):
    C = G.s_bound_constants(lax2.fields_minus, lax2.fields_plus, lax2.coefficients, 2,
                            [4.0, 16.0, 64.0])
    # bounded: the scaled norm never exceeds its early value
    assert np.all(np.isfinite(C)) and np.all(C <= 1.5 * C[0])


def test_characteristic_fields_side():
    s = M.endstate_spectrum(M.burgers(), [1.0])
    with pytest.raises(PreconditionError):
        G.characteristic_fields(s, "left")
