"""Model systems, endstate spectra, stability conditions and shock classification."""
from __future__ import annotations

import numpy as np
import pytest

from viscshock import models as M
from viscshock.errors import ConfigurationError, HyperbolicityError, UnsupportedShockError

BUILTIN = ("burgers", "quadratic2", "cubic", "ns_shock")


def _synthetic(speeds):
    n = len(speeds)
    eye = np.eye(n)
    return M.EndstateSpectrum(np.zeros(n), np.array(speeds, float), eye, eye, np.ones(n),
                              np.zeros(n))


def test_burgers_spectrum():
    s = M.endstate_spectrum(M.burgers(viscosity=0.7), [1.0])
    assert s.speeds[0] == pytest.approx(1.0)
    assert s.L[0, 0] == pytest.approx(1.0) and s.R[0, 0] == pytest.approx(1.0)
    assert s.beta[0] == pytest.approx(0.7)


def test_symmetric_linear_flux_is_dual():
    s = M.endstate_spectrum(M.linear([[0, 1], [1, 0]], np.eye(2)), [0.0, 0.0])
    assert np.allclose(s.speeds, [-1, 1])
    assert np.allclose(s.L @ s.R, np.eye(2), atol=1e-14)


def test_isentropic_ns_speeds():
    s = M.endstate_spectrum(M.isentropic_ns(), [1.0, 0.0])
    assert np.allclose(s.speeds, [-np.sqrt(5 / 3), np.sqrt(5 / 3)])


def test_burgers_coupling_gamma():
    model = M.burgers()
    s = M.endstate_spectrum(model, [1.0])
    ct = M.coupling_coefficients(s, model)
    assert ct.Gamma[0, 0, 0] == pytest.approx(0.5)
    assert s.gamma[0] == pytest.approx(0.5)
    assert ct.b[0, 0] == pytest.approx(1.0)


def test_identity_viscosity_gives_unit_b():
    model = M.linear([[1.0, 2.0], [0.5, -1.0]], np.eye(2))
    s = M.endstate_spectrum(model, [0.0, 0.0])
    ct = M.coupling_coefficients(s, model)
    assert np.allclose(ct.b, np.eye(2), atol=1e-12)
    assert np.allclose(s.beta, 1.0)


def test_decoupled_blocks_have_no_mixed_gamma():
    # f = (u1^2/2, u2^2) with B = I: two independent Burgers fields
    def flux(u):
        return np.stack([0.5 * u[0] ** 2, u[1] ** 2])

    model = M.linear(np.diag([1.0, 2.0]), np.eye(2))
    model.flux = flux
    model.jacobian = lambda u: M._stack([[u[0], 0.0], [0.0, 2 * u[1]]], u)
    model.hessian = lambda u: M._stack([[[1.0, 0.0], [0.0, 0.0]],
                                        [[0.0, 0.0], [0.0, 2.0]]], u)
    s = M.endstate_spectrum(model, [1.0, 1.0])
    G = M.coupling_coefficients(s, model).Gamma
    for i, j, k in np.ndindex(G.shape):
        if len({i, j, k}) > 1:
            assert G[i, j, k] == 0.0


@pytest.mark.parametrize("name", BUILTIN + ("isentropic_ns",))
def test_derivatives_consistent(name):
    model = M.get_model(name)
    u = model.u_minus if model.u_minus is not None else model.background
    assert M.check_derivatives(model, u + 0.01) < 1e-7


@pytest.mark.parametrize("name", BUILTIN)
def test_eigen_residuals_and_beta(name):
    model = M.get_model(name)
    for u in (model.u_minus, model.u_plus):
        s = M.endstate_spectrum(model, u)
        J = model.jacobian(u)
        res = J @ s.R - s.R * s.speeds
        assert np.max(np.abs(res)) < 1e-10 * np.max(np.abs(J))
        B = model.viscosity(u)
        assert np.allclose(s.beta, [s.L[i] @ B @ s.R[:, i] for i in range(s.n)])


@pytest.mark.parametrize("name", BUILTIN)
def test_rankine_hugoniot(name):
    model = M.get_model(name)
    assert M.rankine_hugoniot_defect(model, model.u_minus, model.u_plus) < 1e-12


@pytest.mark.parametrize("name", BUILTIN)
def test_stability_at_endstates(name):
    model = M.get_model(name)
    r = M.stability_checks(model, model.u_minus, model.u_plus)
    assert r.majda_pego and r.genuine_coupling and r.K2


def test_scalar_majda_pego_theta_is_viscosity():
    r = M.stability_checks(M.burgers(viscosity=0.6), [1.0], [-1.0])
    assert r.majda_pego_theta == pytest.approx(0.6, rel=1e-9)


def test_ns_coupling_and_flags():
    model = M.isentropic_ns()
    r = M.stability_checks(model, [1.0, 0.0], [1.0, 0.0])
    assert r.genuine_coupling and r.coupling_margin > 0
    assert r.flags["low_frequency"] and not r.flags["high_frequency_parabolic"]


def test_cubic_linearly_degenerate_field():
    model = M.cubic()
    for u in (model.u_minus, model.u_plus):
        s = M.endstate_spectrum(model, u)
        assert np.min(np.abs(s.gamma)) == 0.0


def test_classify_burgers_lax():
    model = M.burgers()
    st = M.classify_shock(M.endstate_spectrum(model, [1.0]), M.endstate_spectrum(model, [-1.0]))
    assert st.kind == "Lax" and st.ell == 1
    assert st.outgoing_minus == [] and st.outgoing_plus == []


def test_classify_cubic_overcompressive():
    model = M.cubic()
    st = M.classify_shock(M.endstate_spectrum(model, model.u_minus),
                          M.endstate_spectrum(model, model.u_plus))
    assert st.kind == "overcompressive" and st.ell == 2
    assert st.outgoing_plus == [2]


def test_classify_synthetic_three_by_three():
    st = M.classify_shock(_synthetic([-1, 1, 2]), _synthetic([-2, -1, 1]))
    assert st.ell == 1 and st.outgoing_minus == [0] and st.outgoing_plus == [2]


def test_undercompressive_rejected():
    model = M.burgers(u_minus=-1.0, u_plus=1.0)
    with pytest.raises(UnsupportedShockError):
        M.classify_shock(M.endstate_spectrum(model, [-1.0]), M.endstate_spectrum(model, [1.0]))


def test_frozen_endstate_speeds():
    # values recorded from the model definitions (see the module docstrings)
    q = M.get_model("quadratic2")
    assert np.allclose(M.endstate_spectrum(q, q.u_minus).speeds, [0.5, 1.0], atol=1e-12)
    assert np.allclose(M.endstate_spectrum(q, q.u_plus).speeds, [-1.0, 0.5], atol=1e-12)
    ns = M.get_model("ns_shock")
    sm = M.endstate_spectrum(ns, ns.u_minus)
    assert sm.speeds[0] < 0 < sm.speeds[1]


def test_zero_speed_rejected():
    with pytest.raises(HyperbolicityError):
        M.endstate_spectrum(M.burgers(), [0.0])


def test_complex_speeds_rejected():
    with pytest.raises(HyperbolicityError):
        M.endstate_spectrum(M.linear([[0, 1], [-1, 0]], np.eye(2)), [0.0, 0.0])


def test_unknown_model_and_bad_parameter():
    with pytest.raises(ConfigurationError):
        M.get_model("nope")
    with pytest.raises(ConfigurationError):
        M.get_model("burgers", stiffness=2.0)


def test_field_broadcasting():
    model = M.quadratic2()
    u = np.random.default_rng(0).normal(size=(2, 7))
    assert model.flux(u).shape == (2, 7)
    assert model.jacobian(u).shape == (2, 2, 7)
    assert model.hessian(u).shape == (2, 2, 2, 7)
