"""Mass projection, diffusion-wave ansatz, shift tracking and decay fits.

A perturbed solution ``u~`` of a viscous shock problem is split as

    u~(x, t) = u^{delta0 + delta(t)}(x) + phi(x, t) + v(x, t),

where ``u^delta`` runs over the profile family, ``phi`` is a sum of
diffusion waves carried by the outgoing characteristic modes and ``v``
is the residual whose decay is measured.  ``delta0`` and the wave masses
come from the total mass of the initial perturbation; ``delta(t)`` is
tracked by least squares against the family.  Around a constant state
the family is trivial and every mode carries a wave.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (BasisError, FitError, NumericalResolutionError, PerturbationTooLargeError,
                     PreconditionError, TrackingLossError)
from .fitting import FitResult, power_law_fit
from .kernels import DiffusionWaveParams, diffusion_wave
from .models import EndstateSpectrum
from .profile import ProfileFamily

BASIS_COND_MAX = 1e8


# ---------------------------------------------------------------------------
# initial perturbations

def smooth_bump(x, center: float = 0.0, width: float = 1.0) -> np.ndarray:
    """Unit-mass ``C^infinity`` bump supported on ``|x - center| < width``."""
    s = (np.asarray(x, float) - center) / width
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    # int_{-1}^{1} exp(-1/(1-s^2)) ds
    return out / (0.4439938161680794 * width)


@dataclass(frozen=True)
class Perturbation:
    """Componentwise bump with prescribed masses."""

    masses: tuple
    center: float = 0.0
    width: float = 4.0

    def __call__(self, x) -> np.ndarray:
        b = smooth_bump(x, self.center, self.width)
        return np.asarray(self.masses, float)[:, None] * b[None, :]

    @classmethod
    def with_amplitude(cls, direction, amplitude: float, center: float = 0.0,
                       width: float = 4.0) -> "Perturbation":
        """Bump whose peak value is ``amplitude`` along the unit ``direction``."""
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        peak = float(smooth_bump(np.array([center]), center, width)[0])
        return cls(tuple(d * amplitude / peak), center, width)


def grid_mass(x, u) -> np.ndarray:
    """Rectangle-rule mass over the interior nodes, matching the solver."""
    dx = x[1] - x[0]
    return dx * np.sum(np.asarray(u)[..., 1:-1], axis=-1)


# ---------------------------------------------------------------------------
# references

@dataclass
class GridFamily:
    """Profile family corrected to the discrete steady state of a grid.

    ``member(delta, x)`` is the continuous family member plus the
    difference between the discrete and continuous base profiles, carried
    along with the member's translation.  Without a correction the
    continuous family is used unchanged.
    """

    family: ProfileFamily
    x: np.ndarray
    correction: CubicSpline | None = None

    @classmethod
    def from_discrete(cls, family: ProfileFamily, x, values) -> "GridFamily":
        x = np.asarray(x, float)
        diff = np.asarray(values, float) - family.base(x)
        spline = CubicSpline(x, diff, axis=1, extrapolate=False)
        return cls(family, x, spline)

    @property
    def ell(self) -> int:
        return self.family.ell

    @property
    def n(self) -> int:
        return self.family.base.n

    @property
    def masses(self) -> list:
        return [np.asarray(m, float) for m in self.family.masses]

    def _shift(self, delta) -> float:
        if self.ell == 1:
            return float(delta[0])
        return self.family.shift(delta)

    def member(self, delta, x=None) -> np.ndarray:
        x = self.x if x is None else np.asarray(x, float)
        delta = np.atleast_1d(np.asarray(delta, float))
        u = self.family.member(delta, x)
        if self.correction is not None:
            c = self.correction(x + self._shift(delta))
            u = u + np.nan_to_num(c)
        return u

    def member_jacobian(self, delta, x=None, h: float = 1e-5) -> np.ndarray:
        """Centered differences in each parameter, shape ``(ell, n, nx)``."""
        delta = np.atleast_1d(np.asarray(delta, float))
        out = []
        for i in range(self.ell):
            e = np.zeros(self.ell)
            e[i] = h
            out.append((self.member(delta + e, x) - self.member(delta - e, x)) / (2 * h))
        return np.array(out)


@dataclass
class ConstantReference:
    """Trivial family around a constant state."""

    state: np.ndarray
    x: np.ndarray

    ell = 0

    @property
    def n(self) -> int:
        return self.state.size

    @property
    def masses(self) -> list:
        return []

    def member(self, delta=None, x=None) -> np.ndarray:
        x = self.x if x is None else np.asarray(x, float)
        return np.repeat(np.asarray(self.state, float)[:, None], x.size, axis=1)


# ---------------------------------------------------------------------------
# mass projection

@dataclass
class MassDecomposition:
    """Initial mass split into outgoing-mode and family-direction parts.

    ``modes`` lists ``(side, k)`` for each entry of ``m_out``; ``total`` is
    the mass of ``u~_0 - u^{delta0}`` (of ``u~_0 - u`` before the shift).
    """

    modes: list
    m_out: np.ndarray
    c_delta: np.ndarray
    delta0: np.ndarray
    total: np.ndarray
    basis: np.ndarray
    condition: float
    newton_iterations: int = 0


def outgoing_modes(reference, spec_minus: EndstateSpectrum, spec_plus: EndstateSpectrum | None):
    """``(side, k, r)`` of the modes that carry diffusion waves."""
    if reference.ell == 0:
        return [("minus", k, spec_minus.R[:, k].copy()) for k in range(spec_minus.n)]
    out = [("minus", k, spec_minus.R[:, k].copy())
           for k in np.flatnonzero(spec_minus.speeds < 0)]
    out += [("plus", k, spec_plus.R[:, k].copy())
            for k in np.flatnonzero(spec_plus.speeds > 0)]
    return [(s, int(k), r) for s, k, r in out]


def _basis(reference, spec_minus, spec_plus):
    modes = outgoing_modes(reference, spec_minus, spec_plus)
    cols = [r for _, _, r in modes] + reference.masses
    M = np.column_stack(cols) if cols else np.zeros((reference.n, 0))
    if M.shape[1] != reference.n:
        raise BasisError(f"{M.shape[1]} basis vectors for an {reference.n}-dimensional mass")
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > BASIS_COND_MAX:
        raise BasisError(f"mass basis is ill-conditioned (condition number {cond:.3g})")
    return [(s, k) for s, k, _ in modes], M, cond


def project_mass(x, perturbation, reference, spec_minus: EndstateSpectrum,
                 spec_plus: EndstateSpectrum | None = None) -> MassDecomposition:
    """Express the mass of ``perturbation = u~_0 - u`` in the outgoing/family basis.

    Raises
    ------
    BasisError
        When the basis vectors do not span or are nearly dependent.
    """
    modes, M, cond = _basis(reference, spec_minus, spec_plus)
    total = grid_mass(x, perturbation)
    coef = np.linalg.solve(M, total)
    nout = len(modes)
    return MassDecomposition(modes, coef[:nout], coef[nout:], np.zeros(reference.ell), total,
                             M, cond)


def compute_delta0(x, u0, reference, decomp: MassDecomposition, tol: float = 1e-8,
                   max_iter: int = 30, h: float = 1e-5) -> MassDecomposition:
    """Shift the family so the family-direction masses vanish.

    Newton iteration on ``delta -> c(delta)``, the family components of
    the mass of ``u~_0 - u^delta``, starting from ``delta = c``.

    Raises
    ------
    PerturbationTooLargeError
        When the iteration fails to converge.
    """
    ell = reference.ell
    if ell == 0:
        return decomp
    Minv = np.linalg.inv(decomp.basis)
    nout = len(decomp.modes)

    def comps(delta):
        return Minv @ grid_mass(x, u0 - reference.member(delta, x))

    delta = np.array(decomp.c_delta, float)
    c = comps(delta)[nout:]
    width = x[-1] - x[0]
    for it in range(1, max_iter + 1):
        J = np.empty((ell, ell))
        for i in range(ell):
            e = np.zeros(ell)
            e[i] = h
            J[:, i] = (comps(delta + e)[nout:] - comps(delta - e)[nout:]) / (2 * h)
        step = np.linalg.solve(J, -c)
        delta = delta + step
        if not np.all(np.isfinite(delta)) or np.max(np.abs(delta)) > 0.25 * width:
            raise PerturbationTooLargeError("shift iteration left the domain")
        full = comps(delta)
        c = full[nout:]
        if np.max(np.abs(c)) < tol:
            total = grid_mass(x, u0 - reference.member(delta, x))
            return MassDecomposition(decomp.modes, full[:nout], c, delta, total, decomp.basis,
                                     decomp.condition, it)
    raise PerturbationTooLargeError(f"shift iteration did not converge (|c| = {np.max(np.abs(c)):.3g})")


# ---------------------------------------------------------------------------
# diffusion waves

@dataclass(frozen=True)
class DiffusionWave:
    side: str
    k: int
    params: DiffusionWaveParams
    r: np.ndarray


@dataclass
class DiffusionWaveSet:
    waves: list
    n: int

    def __call__(self, x, t) -> np.ndarray:
        x = np.asarray(x, float)
        out = np.zeros((self.n, x.size))
        for w in self.waves:
            out += w.r[:, None] * diffusion_wave(w.params, x, t)[None, :]
        return out

    def component(self, i, x, t) -> np.ndarray:
        return diffusion_wave(self.waves[i].params, x, t)


def build_phi(decomp: MassDecomposition, spec_minus: EndstateSpectrum,
              spec_plus: EndstateSpectrum | None = None) -> DiffusionWaveSet:
    """One diffusion wave per outgoing mode, started from ``m delta`` at ``t = -1``."""
    waves = []
    for (side, k), m in zip(decomp.modes, decomp.m_out):
        spec = spec_minus if side == "minus" else spec_plus
        p = DiffusionWaveParams(float(m), float(spec.beta[k]), float(spec.speeds[k]),
                                float(spec.gamma[k]))
        waves.append(DiffusionWave(side, k, p, spec.R[:, k].copy()))
    return DiffusionWaveSet(waves, spec_minus.n)


# ---------------------------------------------------------------------------
# shift tracking

def extract_delta(u, reference, phi_values, seed=None, x=None, tol: float = 1e-12,
                  max_iter: int = 50) -> np.ndarray:
    """Family parameter minimising ``|u - u^delta - phi|_{L^2}``.

    Gauss-Newton from ``seed`` (default zero).

    Raises
    ------
    TrackingLossError
        When the iteration does not converge in ``max_iter`` steps.
    """
    ell = reference.ell
    if ell == 0:
        return np.zeros(0)
    target = np.asarray(u, float) - np.asarray(phi_values, float)
    delta = np.zeros(ell) if seed is None else np.array(seed, float)
    for _ in range(max_iter):
        r = (target - reference.member(delta, x)).reshape(-1)
        J = reference.member_jacobian(delta, x).reshape(ell, -1).T
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        if not np.all(np.isfinite(step)):
            break
        delta = delta + step
        if np.max(np.abs(step)) < tol * max(1.0, np.max(np.abs(delta))):
            return delta
        # a step far below the grid resolution has converged in practice
        if np.max(np.abs(step)) < 1e-11:
            return delta
    raise TrackingLossError("shift least squares did not converge")


@dataclass
class ShiftTrack:
    times: np.ndarray
    delta: np.ndarray  # (ntimes, ell), zero at t = 0
    delta_dot: np.ndarray


def _shift_track(times, delta) -> ShiftTrack:
    times = np.asarray(times, float)
    delta = np.asarray(delta, float).reshape(times.size, -1)
    if times.size > 2:
        dot = np.gradient(delta, times, axis=0)
    else:
        dot = np.full_like(delta, np.nan)
    return ShiftTrack(times, delta, dot)


# ---------------------------------------------------------------------------
# decomposition of a run

def vector_norms(x, w) -> dict:
    """``L^1, L^2, L^inf`` of the pointwise Euclidean magnitude of ``w``."""
    dx = x[1] - x[0]
    a = np.sqrt(np.sum(np.asarray(w) ** 2, axis=0))
    return {1: float(a.sum() * dx), 2: float(np.sqrt((a * a).sum() * dx)), np.inf: float(a.max())}


@dataclass
class Decomposition:
    x: np.ndarray
    times: np.ndarray
    residuals: list  # v(., t) per time
    track: ShiftTrack | None
    v_norms: dict  # p -> array over times
    phi_norms: dict
    initial_residual_mass: np.ndarray
    tracking_lost: bool = False


def decompose_timeseries(x, snapshots, reference, decomp: MassDecomposition,
                         phi: DiffusionWaveSet, keep_residuals: bool = True) -> Decomposition:
    """Residual ``v = u~ - u^{delta0 + delta(t)} - phi`` at every snapshot.

    ``snapshots`` is a sequence of ``(t, values)`` pairs in increasing
    time; the first should be the initial datum at ``t = 0``, where
    ``delta(0) = 0`` by construction.  If tracking is lost the shift stays
    at its last tracked value, later entries of ``delta`` are NaN and
    ``tracking_lost`` is set.
    """
    x = np.asarray(x, float)
    ell = reference.ell
    times, residuals, deltas = [], [], []
    vn = {1: [], 2: [], np.inf: []}
    pn = {1: [], 2: [], np.inf: []}
    seed = np.array(decomp.delta0, float)
    lost = False
    m0 = None
    for t, u in snapshots:
        ph = phi(x, t)
        tracked = True
        if ell and t > 0 and not lost:
            try:
                total = extract_delta(u, reference, ph, seed, x)
                seed = total
            except TrackingLossError:
                lost = True
        if ell and t > 0 and lost:
            # keep the last tracked shift so the residual stays defined
            total, tracked = seed, False
        elif not (ell and t > 0):
            total = np.array(decomp.delta0, float)
        ref = reference.member(total, x) if ell else reference.member(None, x)
        v = np.asarray(u, float) - ref - ph
        if m0 is None:
            m0 = grid_mass(x, v)
        times.append(float(t))
        deltas.append(total - decomp.delta0 if tracked else np.full(ell, np.nan))
        for p, val in vector_norms(x, v).items():
            vn[p].append(val)
        for p, val in vector_norms(x, ph).items():
            pn[p].append(val)
        if keep_residuals:
            residuals.append(v)
    track = _shift_track(times, deltas) if ell and times else None
    return Decomposition(x, np.array(times), residuals, track,
                         {p: np.array(a) for p, a in vn.items()},
                         {p: np.array(a) for p, a in pn.items()},
                         m0 if m0 is not None else np.zeros(reference.n), lost)


# ---------------------------------------------------------------------------
# fits and reports

def fit_rate(times, values, t_fit_min: float = 16.0, t_max: float | None = None,
             weights=None) -> FitResult:
    """Exponent of a power law fitted on ``t >= t_fit_min`` in log-log coordinates.

    Raises
    ------
    FitError
        With fewer than five points in the window or nonpositive values.
    """
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    mask = times >= t_fit_min * (1 - 1e-12)
    if t_max is not None:
        mask &= times <= t_max * (1 + 1e-12)
    if mask.sum() < 5:
        raise FitError(f"rate fit needs five points with t >= {t_fit_min}, got {int(mask.sum())}")
    if np.any(~(values[mask] > 0)):
        raise FitError("rate fit needs positive values")
    w = None if weights is None else np.asarray(weights, float)[mask]
    return power_law_fit(times[mask], values[mask], weights=w, min_points=5)


@dataclass
class DecayRow:
    """Fitted exponent with its acceptance band ``lower <= slope <= upper``."""

    quantity: str
    p: str
    slope: float
    stderr: float
    target: float
    lower: float
    upper: float
    verdict: str  # "pass", "fail", "info" (no band) or "n/a" (no fit)


def _verdict(slope, lower, upper) -> str:
    if not np.isfinite(slope):
        return "n/a"
    if np.isinf(lower) and np.isinf(upper):
        return "info"
    return "pass" if lower <= slope <= upper else "fail"


@dataclass
class DecayReport:
    rows: list = field(default_factory=list)
    series: dict = field(default_factory=dict)  # "quantity:p" -> (times, values)

    def add(self, quantity: str, p, times, values, target: float, upper: float = np.inf,
            lower: float = -np.inf, t_fit_min: float = 16.0, t_max: float | None = None) -> DecayRow:
        """Fit one series and judge the slope against ``[lower, upper]``."""
        label = _p_label(p)
        self.series[f"{quantity}:{label}"] = (np.asarray(times, float), np.asarray(values, float))
        try:
            fit = fit_rate(times, values, t_fit_min, t_max)
            slope, err = fit.slope, fit.stderr
        except FitError:
            slope, err = np.nan, np.nan
        return self.add_slope(quantity, p, slope, err, target, upper, lower)

    def add_slope(self, quantity: str, p, slope: float, stderr: float, target: float,
                  upper: float = np.inf, lower: float = -np.inf) -> DecayRow:
        row = DecayRow(quantity, _p_label(p), float(slope), float(stderr), float(target),
                       float(lower), float(upper), _verdict(slope, lower, upper))
        self.rows.append(row)
        return row

    def row(self, quantity: str, p="") -> DecayRow:
        label = _p_label(p)
        for r in self.rows:
            if r.quantity == quantity and r.p == label:
                return r
        raise KeyError((quantity, label))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "p", "slope", "stderr", "target", "lower", "upper", "verdict"])
        for r in self.rows:
            w.writerow([r.quantity, r.p, _fmt(r.slope), _fmt(r.stderr), _fmt(r.target),
                        _fmt(r.lower), _fmt(r.upper), r.verdict])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"{'quantity':<14}{'p':>5}{'slope':>10}{'stderr':>9}{'target':>9}"
                 f"{'band':>18}  verdict"]
        for r in self.rows:
            band = f"[{_short(r.lower)}, {_short(r.upper)}]"
            lines.append(f"{r.quantity:<14}{r.p:>5}{r.slope:>10.4f}{r.stderr:>9.4f}"
                         f"{r.target:>9.3f}{band:>18}  {r.verdict}")
        return "\n".join(lines)


def _short(v: float) -> str:
    return ("-inf" if v < 0 else "inf") if np.isinf(v) else f"{v:.3g}"


def _p_label(p) -> str:
    if p == "" or p is None:
        return ""
    return "inf" if np.isinf(float(p)) else str(int(p))


def _fmt(v: float) -> str:
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"


def predicted_exponent(p, extra: float = 0.25) -> float:
    """Predicted ``L^p`` exponent ``-(1/2)(1 - 1/p) - extra``."""
    inv = 0.0 if np.isinf(float(p)) else 1.0 / float(p)
    return -0.5 * (1.0 - inv) - extra


# ---------------------------------------------------------------------------
# diagnostics

@dataclass
class SobolevReport:
    times: np.ndarray
    h3: np.ndarray
    l2: np.ndarray
    l2_fit: FitResult | None
    non_increasing: bool
    richardson_gap: float


def _derivative_norms(v, dx, stride: int = 1):
    """``sum_{k<=3} |d^k v|^2`` with centered differences of step ``stride*dx``."""
    h = stride * dx
    w = v[:, ::stride]
    total = np.sum(w * w) * h
    d1 = (w[:, 2:] - w[:, :-2]) / (2 * h)
    d2 = (w[:, 2:] - 2 * w[:, 1:-1] + w[:, :-2]) / h ** 2
    d3 = (w[:, 4:] - 2 * w[:, 3:-1] + 2 * w[:, 1:-3] - w[:, :-4]) / (2 * h ** 3)
    parts = [total, np.sum(d1 * d1) * h, np.sum(d2 * d2) * h, np.sum(d3 * d3) * h]
    return np.array(parts)


def sobolev_diagnostic(x, times, residuals, t_min: float = 10.0, growth_tol: float = 1.05,
                       coordinates=None, richardson_tol: float = 0.25,
                       l2_fit_min: float = 16.0) -> SobolevReport:
    """Discrete ``H^3`` norm of the residual and its envelope after ``t_min``.

    ``coordinates`` optionally maps ``v`` to the symmetrisable variables
    before the norm is taken (identity by default).  The envelope is
    non-increasing when consecutive checkpoints after ``t_min`` never grow
    by more than ``growth_tol``.

    Raises
    ------
    NumericalResolutionError
        When the norm changes by more than ``richardson_tol`` (relative)
        between steps ``dx`` and ``2 dx`` at a checkpoint after ``t_min``.
    """
    x = np.asarray(x, float)
    dx = x[1] - x[0]
    times = np.asarray(times, float)
    h3, l2, gap = [], [], 0.0
    for t, v in zip(times, residuals):
        w = np.asarray(v, float) if coordinates is None else coordinates(v)
        fine = _derivative_norms(w, dx)
        h3.append(float(np.sqrt(fine.sum())))
        l2.append(float(np.sqrt(fine[0])))
        if t >= t_min and fine.sum() > 0:
            coarse = _derivative_norms(w, dx, 2)
            gap = max(gap, abs(np.sqrt(coarse.sum()) - np.sqrt(fine.sum())) / np.sqrt(fine.sum()))
    if gap > richardson_tol:
        raise NumericalResolutionError(f"H3 norm unresolved (relative change {gap:.3g} at 2dx)")
    h3, l2 = np.array(h3), np.array(l2)
    late = times >= t_min
    hl = h3[late]
    ok = bool(np.all(hl[1:] <= growth_tol * hl[:-1])) if hl.size > 1 else True
    try:
        fit = fit_rate(times, l2, l2_fit_min)
    except FitError:
        fit = None
    return SobolevReport(times, h3, l2, fit, ok, gap)


def antiderivative_bound(x, v0) -> tuple:
    """``(|V_0|_{L^1}, |x v_0|_{L^1})`` for ``V_0 = int_{-inf}^x v_0``.

    Both are summed over components; the first is at most the second
    whenever every component of ``v_0`` has zero mass.
    """
    x = np.asarray(x, float)
    v0 = np.atleast_2d(np.asarray(v0, float))
    dx = x[1] - x[0]
    V = np.cumsum(v0, axis=1) * dx
    return float(np.sum(np.abs(V)) * dx), float(np.sum(np.abs(x * v0)) * dx)


@dataclass
class OutgoingMassCheck:
    side: str
    k: int
    expected: float
    measured: float

    @property
    def relative_error(self) -> float:
        return abs(self.measured - self.expected) / max(abs(self.expected), 1e-300)


def outgoing_mass_check(x, t: float, u, reference_values, phi: DiffusionWaveSet,
                        spec_minus: EndstateSpectrum, spec_plus: EndstateSpectrum | None = None,
                        window_fraction: float = 0.75, diffusion_lengths: float = 4.0) -> list:
    """Masses carried by each outgoing wave, measured in a window moving with it.

    The window is centred at ``a (t + 1)`` with half-width the smallest of
    ``window_fraction * |a| (t + 1)``, which keeps it away from the shock,
    ``diffusion_lengths`` multiples of ``sqrt(4 beta (t + 1))``, and half the
    distance to the nearest other wave, so that the interaction layer riding
    with a neighbour is not split between two windows.  The mass of
    ``l . (u - reference)`` there is compared with the wave mass.
    """
    x = np.asarray(x, float)
    dx = x[1] - x[0]
    w = np.asarray(u, float) - np.asarray(reference_values, float)
    centres = np.array([wv.params.speed * (t + 1.0) for wv in phi.waves])
    out = []
    for i, wave in enumerate(phi.waves):
        spec = spec_minus if wave.side == "minus" else spec_plus
        a = wave.params.speed
        c = centres[i]
        half = min(window_fraction * abs(a) * (t + 1.0),
                   diffusion_lengths * np.sqrt(4.0 * wave.params.beta * (t + 1.0)))
        gaps = np.abs(np.delete(centres, i) - c)
        if gaps.size:
            half = min(half, 0.5 * gaps.min())
        mask = np.abs(x - c) <= half
        if mask[0] or mask[-1]:
            raise PreconditionError("outgoing window reaches the domain boundary")
        proj = spec.L[wave.k] @ w[:, mask]
        out.append(OutgoingMassCheck(wave.side, wave.k, wave.params.mass, float(proj.sum() * dx)))
    return out
