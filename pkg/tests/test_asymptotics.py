"""Mass projection, shift tracking, diffusion-wave ansatz and rate fits."""
from __future__ import annotations

import numpy as np
import pytest

from viscshock import asymptotics as A
from viscshock import models as M
from viscshock.errors import BasisError, FitError, NumericalResolutionError
from viscshock.kernels import DiffusionWaveParams, diffusion_wave
from viscshock.profile import profile_family, solve_profile

X = np.linspace(-80, 80, 3201)


def _setup(name):
    model = M.get_model(name)
    prof = solve_profile(model)
    fam = profile_family(model, prof)
    sm = M.endstate_spectrum(model, prof.u_minus)
    sp = M.endstate_spectrum(model, prof.u_plus)
    return prof, A.GridFamily(fam, X), sm, sp


@pytest.fixture(scope="module")
def burgers():
    return _setup("burgers")


@pytest.fixture(scope="module")
def lax2():
    return _setup("quadratic2")


def test_smooth_bump_unit_mass():
    x = np.linspace(-3, 3, 6001)
    assert np.trapezoid(A.smooth_bump(x, 0.5, 2.0), x) == pytest.approx(1.0, abs=1e-9)
    assert A.smooth_bump(np.array([2.6]), 0.5, 2.0)[0] == 0.0


def test_zero_perturbation(burgers):
    prof, ref, sm, sp = burgers
    d = A.project_mass(X, np.zeros((1, X.size)), ref, sm, sp)
    assert np.all(d.c_delta == 0) and d.m_out.size == 0
    d = A.compute_delta0(X, prof(X), ref, d)
    assert np.max(np.abs(d.delta0)) < 1e-12


def test_burgers_projection_and_shift(burgers):
    prof, ref, sm, sp = burgers
    w0 = A.Perturbation((0.05,), center=-1.0)(X)
    d = A.project_mass(X, w0, ref, sm, sp)
    assert d.c_delta[0] == pytest.approx(-0.025, abs=1e-10)
    d = A.compute_delta0(X, prof(X) + w0, ref, d)
    # a shift by delta changes the mass by delta (u_+ - u_-) = -2 delta
    assert d.delta0[0] == pytest.approx(-0.025, abs=1e-6)
    assert np.max(np.abs(d.total)) < 1e-8


def test_lax_outgoing_alignment(lax2):
    prof, ref, sm, sp = lax2
    modes = A.outgoing_modes(ref, sm, sp)
    assert len(modes) == 1
    side, k, r = modes[0]
    w0 = A.Perturbation(tuple(0.02 * r), center=-5.0)(X)
    d = A.project_mass(X, w0, ref, sm, sp)
    assert abs(d.c_delta[0]) < 1e-10
    assert d.m_out[0] == pytest.approx(0.02, abs=1e-10)


def test_lax_delta0_is_c1(lax2):
    prof, ref, sm, sp = lax2
    w0 = A.Perturbation((0.01, -0.02), center=2.0)(X)
    d = A.project_mass(X, w0, ref, sm, sp)
    d2 = A.compute_delta0(X, prof(X) + w0, ref, d)
    assert d2.delta0[0] == pytest.approx(d.c_delta[0], abs=1e-6)
    assert np.max(np.abs(d2.c_delta)) < 1e-8


def test_degenerate_basis_rejected(lax2):
    prof, ref, sm, sp = lax2
    bad = A.GridFamily(ref.family, X)
    r = A.outgoing_modes(ref, sm, sp)[0][2]
    bad.family = type("F", (), {"masses": [r], "ell": 1, "base": ref.family.base})()
    with pytest.raises(BasisError):
        A.project_mass(X, np.zeros((2, X.size)), bad, sm, sp)


def test_extract_exact_member(lax2):
    prof, ref, _, _ = lax2
    zero = np.zeros((2, X.size))
    assert A.extract_delta(ref.member([0.3]), ref, zero, x=X)[0] == pytest.approx(0.3, abs=1e-6)
    assert abs(A.extract_delta(prof(X), ref, zero, x=X)[0]) < 1e-10


def test_extract_linearized_shift(lax2):
    prof, ref, _, _ = lax2
    u = prof(X) + 0.1 * prof.derivative(X)
    d = A.extract_delta(u, ref, np.zeros_like(u), x=X)[0]
    assert d == pytest.approx(0.1, abs=0.01)
    # brute-force scan of the objective
    grid = np.linspace(0.08, 0.12, 401)
    obj = [np.sum((u - ref.member([s])) ** 2) for s in grid]
    assert d == pytest.approx(grid[int(np.argmin(obj))], abs=2e-4)


def test_phi_zero_masses():
    spec = M.endstate_spectrum(M.quadratic2(), M.quadratic2().background)
    d = A.MassDecomposition([("minus", 0), ("minus", 1)], np.zeros(2), np.zeros(0), np.zeros(0),
                            np.zeros(2), np.eye(2), 1.0)
    phi = A.build_phi(d, spec)
    assert np.all(phi(X, 3.0) == 0)


@pytest.mark.parametrize("p, target", [(1, 0.0), (2, -0.25), (np.inf, -0.5)])
def test_phi_norm_slopes(p, target):
    x = np.linspace(-400, 400, 16001)
    w = A.DiffusionWaveSet([A.DiffusionWave("minus", 0, DiffusionWaveParams(0.3, 1.0, -0.5, 0.5),
                                            np.array([1.0]))], 1)
    ts = [16.0, 32.0, 64.0, 128.0, 256.0]
    vals = [A.vector_norms(x, w(x, t))[p] for t in ts]
    assert A.fit_rate(ts, vals).slope == pytest.approx(target, abs=0.05)


def test_phi_mass_independent_of_gamma():
    x = np.linspace(-200, 200, 8001)
    for t in (0.0, 5.0, 50.0):
        a = np.trapezoid(diffusion_wave(DiffusionWaveParams(0.4, 1.0, 1.0, 0.0), x, t), x)
        b = np.trapezoid(diffusion_wave(DiffusionWaveParams(0.4, 1.0, 1.0, 0.5), x, t), x)
        assert a == pytest.approx(b, abs=1e-9) and a == pytest.approx(0.4, abs=1e-9)


def test_initial_residual_mass_vanishes(lax2):
    prof, ref, sm, sp = lax2
    w0 = A.Perturbation((0.01, 0.015), center=-3.0)(X)
    u0 = prof(X) + w0
    d = A.compute_delta0(X, u0, ref, A.project_mass(X, w0, ref, sm, sp))
    phi = A.build_phi(d, sm, sp)
    dec = A.decompose_timeseries(X, [(0.0, u0)], ref, d, phi)
    l1 = np.sum(np.abs(w0)) * (X[1] - X[0])
    assert np.max(np.abs(dec.initial_residual_mass)) < 1e-7 * l1
    assert np.all(dec.track.delta[0] == 0)


def test_exact_family_input_has_quadratic_residual(lax2):
    prof, ref, sm, sp = lax2
    d = A.MassDecomposition([("minus", 0)], np.array([0.01]), np.zeros(1), np.zeros(1),
                            np.zeros(2), np.eye(2), 1.0)
    phi = A.build_phi(d, sm, sp)
    snaps = [(0.0, prof(X)), (4.0, ref.member([0.2]) + phi(X, 4.0))]
    dec = A.decompose_timeseries(X, snaps, ref, d, phi)
    assert dec.track.delta[1, 0] == pytest.approx(0.2, abs=1e-6)
    assert dec.v_norms[np.inf][1] < 1e-6


def test_fit_rate_exact_power():
    t = 2.0 ** np.arange(4, 10)
    assert A.fit_rate(t, t ** -0.25).slope == pytest.approx(-0.25, abs=1e-12)
    with pytest.raises(FitError):
        A.fit_rate(t, -t)
    with pytest.raises(FitError):
        A.fit_rate(t[:3], t[:3] ** -0.5)


def test_predicted_exponents():
    assert A.predicted_exponent(2) == -0.5
    assert A.predicted_exponent(1) == -0.25
    assert A.predicted_exponent(np.inf) == -0.75


def test_report_verdicts():
    rep = A.DecayReport()
    t = 2.0 ** np.arange(4, 9)
    assert rep.add("v", 2, t, t ** -0.5, -0.5, upper=-0.45).verdict == "pass"
    assert rep.add("v", 1, t, t ** -0.1, -0.25, upper=-0.2).verdict == "fail"
    assert rep.add("delta", "", t, -t, -0.5, upper=-0.35).verdict == "n/a"
    assert rep.row("v", 2).slope == pytest.approx(-0.5)
    assert rep.to_csv().splitlines()[0].startswith("quantity,p,slope")


def test_sobolev_zero_input():
    x = np.linspace(-10, 10, 401)
    rep = A.sobolev_diagnostic(x, [0.0, 16, 32, 64, 128, 256],
                               [np.zeros((2, x.size))] * 6)
    assert np.all(rep.h3 == 0) and rep.non_increasing


def test_sobolev_resolution_error():
    x = np.linspace(-10, 10, 201)
    noisy = np.sin(40 * x)[None, :]
    with pytest.raises(NumericalResolutionError):
        A.sobolev_diagnostic(x, [20.0], [noisy])


def test_antiderivative_bound():
    rng = np.random.default_rng(3)
    x = np.linspace(-20, 20, 4001)
    for _ in range(5):
        c = rng.uniform(-5, 5, 2)
        v = np.stack([A.smooth_bump(x, c[0], 2) - A.smooth_bump(x, c[1], 3),
                      np.gradient(A.smooth_bump(x, c[1], 2), x)])
        lhs, rhs = A.antiderivative_bound(x, v)
        assert lhs <= rhs


def test_outgoing_window_mass():
    x = np.linspace(-100, 300, 8001)
    spec = M.endstate_spectrum(M.burgers(), [2.0])
    d = A.MassDecomposition([("minus", 0)], np.array([0.2]), np.zeros(0), np.zeros(0),
                            np.zeros(1), np.eye(1), 1.0)
    phi = A.build_phi(d, spec)
    u = 2.0 + phi(x, 50.0)
    chk = A.outgoing_mass_check(x, 50.0, u, np.full_like(u, 2.0), phi, spec)[0]
    assert chk.relative_error < 1e-5


def test_outgoing_windows_stop_at_neighbours():
    # two linear waves at speeds 0.5 and 1 overlap at t = 256 unless each
    # window stops halfway to the other
    x = np.linspace(-50, 450, 10001)
    spec = M.endstate_spectrum(M.linear(np.diag([0.5, 1.0]), np.eye(2)), [0.0, 0.0])
    d = A.MassDecomposition([("minus", 0), ("minus", 1)], np.array([0.06, -0.005]),
                            np.zeros(0), np.zeros(0), np.zeros(2), np.eye(2), 1.0)
    phi = A.build_phi(d, spec)
    u = phi(x, 256.0)
    # a zero-mass dipole of the second component riding with the first wave
    s = x - 0.5 * 257
    u[1] += 1e-4 * s * np.exp(-s ** 2 / 400)
    checks = A.outgoing_mass_check(x, 256.0, u, np.zeros_like(u), phi, spec)
    assert max(c.relative_error for c in checks) < 0.01
