"""Stationary viscous shock profiles and their parameter families.

A profile solves ``B(u) u' = f(u) - f(u_-)``.  Rows of ``B`` that vanish
(real viscosity) turn into the algebraic constraint ``f^I(u) = f^I(u_-)``,
which is differentiated so that the reduced flow reads
``M(u) u' = [0; f^II(u) - f^II(u_-)]`` with ``M = [df^I; B^II]``.

Profiles are found by shooting backward in ``x`` from the stable manifold of
``u_+``.  When ``u_-`` is a repeller of the profile flow every backward orbit
near a connection also connects, and the family dimension equals the
dimension of that stable manifold.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (FitError, ManifoldDimensionError, NoConnectionError,
                     PreconditionError)
from .models import ModelSystem, rankine_hugoniot_defect

EPS_START = 1e-6
ARRIVAL_TOL = 1e-9


def profile_rhs(model: ModelSystem, u_minus):
    """Right-hand side ``u' = g(u)`` of the profile equation."""
    u_minus = np.asarray(u_minus, float)
    f_minus = model.flux(u_minus)
    z = model.n - model.block_rank

    def g(u):
        F = model.flux(u) - f_minus
        if z == 0:
            return np.linalg.solve(model.viscosity(u), F)
        M = np.vstack([model.jacobian(u)[:z], model.viscosity(u)[z:]])
        rhs = np.concatenate([np.zeros(z), F[z:]])
        return np.linalg.solve(M, rhs)

    return g


def rest_point_jacobian(model: ModelSystem, u_minus, u) -> np.ndarray:
    """Linearisation of the profile flow at a rest point ``u``."""
    u = np.asarray(u, float)
    z = model.n - model.block_rank
    J = model.jacobian(u)
    if z == 0:
        return np.linalg.solve(model.viscosity(u), J)
    M = np.vstack([J[:z], model.viscosity(u)[z:]])
    rhs = np.vstack([np.zeros((z, model.n)), J[z:]])
    return np.linalg.solve(M, rhs)


def _split(J, tol=1e-9):
    """Eigen-data of a rest point, grouped into stable, centre and unstable."""
    lam, V = np.linalg.eig(J)
    scale = max(1.0, np.max(np.abs(lam)))
    stable = lam.real < -tol * scale
    unstable = lam.real > tol * scale
    return lam, V, stable, unstable


def _real_basis(V, lam, mask):
    cols = []
    used = set()
    for i in np.flatnonzero(mask):
        if i in used:
            continue
        v = V[:, i]
        if abs(lam[i].imag) > 1e-12:
            j = next(j for j in np.flatnonzero(mask)
                     if j != i and abs(lam[j] - np.conj(lam[i])) < 1e-10)
            used.add(j)
            cols += [v.real, v.imag]
        else:
            cols.append(v.real)
        used.add(i)
    Q, _ = np.linalg.qr(np.array(cols).T)
    return Q


@dataclass
class _Shot:
    theta: np.ndarray
    sol: object
    x_end: float  # most negative ODE time reached (near u_-)
    start: np.ndarray  # state at ODE time 0 (near u_+)
    shift: float = 0.0


@dataclass
class ShockProfile:
    """Connecting orbit ``u_-`` to ``u_+`` with phase fixed at ``x = 0``.

    Calling the profile evaluates it anywhere: the integrated orbit in the
    core and the linearised flow at each rest point beyond it.
    """

    model: ModelSystem
    u_minus: np.ndarray
    u_plus: np.ndarray
    x: np.ndarray
    values: np.ndarray
    tail_rates: tuple
    theta: np.ndarray
    speed: float = 0.0
    _shot: _Shot = field(default=None, repr=False)
    _tails: dict = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray:
        return _evaluate(self._shot, self._tails, np.asarray(x, float))

    def derivative(self, x) -> np.ndarray:
        """``u_x`` from the profile equation."""
        g = self._tails["g"]
        U = self(x)
        return np.column_stack([g(U[:, i]) for i in range(U.shape[1])]) if U.ndim > 1 else g(U)

    @property
    def n(self) -> int:
        return self.model.n


def _tail_data(model, u_minus, u_plus):
    g = profile_rhs(model, u_minus)
    data = {"g": g, "u_minus": np.asarray(u_minus, float), "u_plus": np.asarray(u_plus, float)}
    for side, u in (("minus", u_minus), ("plus", u_plus)):
        lam, V = np.linalg.eig(rest_point_jacobian(model, u_minus, u))
        data[side] = (lam, V, np.linalg.inv(V))
    return data


def _linear_tail(data, side, anchor_x, anchor_u, x):
    lam, V, Vi = data[side]
    base = data["u_minus"] if side == "minus" else data["u_plus"]
    c = Vi @ (anchor_u - base)
    # keep only the modes that decay away from the core
    c = np.where(lam.real > 0 if side == "minus" else lam.real < 0, c, 0.0)
    expo = np.exp(np.outer(lam, x - anchor_x))
    return base[:, None] + (V @ (c[:, None] * expo)).real


def _evaluate(shot, data, x):
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    s = x + shot.shift  # ODE time
    out = np.empty((data["u_plus"].size, x.size))
    core = (s <= 0) & (s >= shot.x_end)
    if np.any(core):
        out[:, core] = shot.sol(s[core])
    right = s > 0
    if np.any(right):
        out[:, right] = _linear_tail(data, "plus", 0.0, shot.start, s[right])
    left = s < shot.x_end
    if np.any(left):
        out[:, left] = _linear_tail(data, "minus", shot.x_end, shot.sol(shot.x_end), s[left])
    return out[:, 0] if scalar else out


class ProfileShooter:
    """Backward shooting from the stable manifold of ``u_+``."""

    def __init__(self, model: ModelSystem, u_minus, u_plus, rtol: float = 1e-12,
                 x_max: float = 4000.0, eps: float = EPS_START):
        self.model = model
        self.u_minus = np.asarray(u_minus, float)
        self.u_plus = np.asarray(u_plus, float)
        if rankine_hugoniot_defect(model, self.u_minus, self.u_plus) > 1e-8:
            raise PreconditionError("endstates violate Rankine-Hugoniot in the shock frame")
        self.g = profile_rhs(model, self.u_minus)
        self.rtol = rtol
        self.x_max = x_max
        self.eps = eps
        Jp = rest_point_jacobian(model, self.u_minus, self.u_plus)
        lam, V, st, _ = _split(Jp)
        if not np.any(st):
            raise NoConnectionError("u_+ has no stable directions")
        self.stable_lam = lam[st]
        self.stable_basis = _real_basis(V, lam, st)
        Jm = rest_point_jacobian(model, self.u_minus, self.u_minus)
        lam_m, _, st_m, un_m = _split(Jm)
        self.m_s = int(np.sum(st))
        self.m_u = int(np.sum(un_m))
        # the reduced flow of a real-viscosity model has one neutral
        # direction per algebraic constraint
        self.dim = model.block_rank
        self.repeller = bool(self.m_u == self.dim)
        self.tails = _tail_data(model, self.u_minus, self.u_plus)
        self.mid = 0.5 * (self.u_minus[0] + self.u_plus[0])

    @property
    def expected_ell(self) -> int:
        return self.m_u + self.m_s - self.dim

    def default_theta(self) -> np.ndarray:
        """Slowest stable direction, the one generic orbits approach along."""
        coords = self.stable_basis.T @ np.real(
            np.linalg.eig(rest_point_jacobian(self.model, self.u_minus, self.u_plus))[1])
        lam = np.linalg.eigvals(rest_point_jacobian(self.model, self.u_minus, self.u_plus))
        st = lam.real < 0
        slow = np.flatnonzero(st)[np.argmax(lam.real[st])]
        th = coords[:, slow]
        return th / np.linalg.norm(th)

    def shoot(self, theta) -> _Shot:
        theta = np.asarray(theta, float)
        theta = theta / np.linalg.norm(theta)
        start = self.u_plus + self.eps * (self.stable_basis @ theta)
        um, scale = self.u_minus, max(1.0, np.max(np.abs(self.u_minus - self.u_plus)))

        def arrive(x, u):
            return np.linalg.norm(u - um) - ARRIVAL_TOL * scale
        arrive.terminal = True

        def escape(x, u):
            return 1e3 * scale - np.linalg.norm(u - um)
        escape.terminal = True

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                sol = solve_ivp(lambda x, u: self.g(u), (0.0, -self.x_max), start, method="DOP853",
                                rtol=self.rtol, atol=self.rtol * 1e-2 * scale, dense_output=True,
                                events=[arrive, escape])
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                raise NoConnectionError(f"profile flow singular: {exc}") from None
        if sol.status != 1 or sol.t_events[0].size == 0:
            raise NoConnectionError(
                f"orbit from u_+ did not reach u_- (distance {np.linalg.norm(sol.y[:, -1] - um):.3g})")
        shot = _Shot(theta, sol.sol, float(sol.t[-1]), start)
        shot.shift = self._phase(shot)
        return shot

    def _phase(self, shot) -> float:
        xs = np.linspace(shot.x_end, 0.0, 4001)
        c = shot.sol(xs)[0] - self.mid
        idx = np.flatnonzero(np.sign(c[:-1]) != np.sign(c[1:]))
        if idx.size == 0:
            raise NoConnectionError("first component never crosses the midpoint value")
        i = idx[0]
        root = brentq(lambda s: shot.sol(s)[0] - self.mid, xs[i], xs[i + 1], xtol=1e-14)
        return float(root)

    def connect(self, theta=None) -> _Shot:
        if not self.repeller:
            raise NoConnectionError(
                f"u_- is not a repeller of the profile flow ({self.m_u} of {self.dim} "
                "directions unstable); backward shooting cannot find the connection")
        if theta is not None:
            return self.shoot(theta)
        th = self.default_theta()
        errors = []
        for sign in (1.0, -1.0):
            try:
                return self.shoot(sign * th)
            except NoConnectionError as exc:
                errors.append(str(exc))
        # scan the sphere of stable directions
        for th in _sphere_samples(self.m_s, 64):
            try:
                return self.shoot(th)
            except NoConnectionError as exc:
                errors.append(str(exc))
        raise NoConnectionError("no connecting orbit found: " + errors[0])


def _sphere_samples(dim, count):
    if dim == 1:
        return [np.array([1.0]), np.array([-1.0])]
    rng = np.random.default_rng(12345)
    pts = rng.normal(size=(count, dim))
    return list(pts / np.linalg.norm(pts, axis=1, keepdims=True))


def _fd6(values, h):
    """Sixth-order centred first derivative along the last axis (interior)."""
    c = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
    out = np.zeros_like(values[..., 3:-3])
    n = values.shape[-1]
    for k, ck in enumerate(c):
        if ck:
            out += ck * values[..., k:n - 6 + k]
    return out / h


def _build(shooter, shot, half_width, dx, endstate_tol, auto_extend=True):
    while True:
        x = np.arange(-half_width, half_width + 0.5 * dx, dx)
        vals = _evaluate(shot, shooter.tails, x)
        err_m = np.max(np.abs(vals[:, 0] - shooter.u_minus))
        err_p = np.max(np.abs(vals[:, -1] - shooter.u_plus))
        if max(err_m, err_p) < endstate_tol or not auto_extend:
            break
        half_width *= 1.5
        if half_width > 1e4:
            raise NoConnectionError("profile does not reach its endstates")
    prof = ShockProfile(shooter.model, shooter.u_minus, shooter.u_plus, x, vals, (np.nan, np.nan),
                        shot.theta, 0.0, shot, shooter.tails)
    return prof


def solve_profile(model: ModelSystem, u_minus=None, u_plus=None, half_width: float = 40.0,
                  dx: float = 0.05, endstate_tol: float = 1e-6, theta=None) -> ShockProfile:
    """Profile from ``u_-`` to ``u_+`` with ``u_1(0) = (u_-1 + u_+1)/2``.

    Raises
    ------
    NoConnectionError
        When no connecting orbit is found.
    """
    u_minus = model.u_minus if u_minus is None else np.asarray(u_minus, float)
    u_plus = model.u_plus if u_plus is None else np.asarray(u_plus, float)
    if u_minus is None or u_plus is None:
        raise PreconditionError(f"model {model.name} has no default endstates")
    shooter = ProfileShooter(model, u_minus, u_plus)
    shot = shooter.connect(theta)
    prof = _build(shooter, shot, half_width, dx, endstate_tol)
    prof.tail_rates = tail_fit(prof)
    return prof


def profile_residual(profile: ShockProfile, h: float = 0.01) -> float:
    """Max-norm residual of ``u' - g(u)`` with sixth-order differences."""
    x = np.arange(profile.x[0], profile.x[-1] + 0.5 * h, h)
    U = profile(x)
    dU = _fd6(U, h)
    G = np.column_stack([profile._tails["g"](U[:, i]) for i in range(3, x.size - 3)])
    return float(np.max(np.abs(dU - G)))


# ---------------------------------------------------------------------------
# tails

def decay_rate(x, dist, upper: float = 1e-3, lower: float = 1e-10, min_points: int = 8):
    """Exponential rate of ``dist(x) -> 0`` as ``|x|`` grows.

    Fits ``log dist`` against ``|x|`` where ``lower < dist < upper``.  When
    the tail oscillates, the fit uses the local maxima (envelope) and a
    warning is issued.
    """
    x = np.asarray(x, float)
    d = np.asarray(dist, float)
    win = (d < upper) & (d > lower)
    # keep only the outer contiguous window
    if not np.any(win):
        raise FitError("tail never enters the fit window")
    xs, ds = np.abs(x[win]), d[win]
    order = np.argsort(xs)
    xs, ds = xs[order], ds[order]
    if xs.size < min_points:
        raise FitError("too few tail points for an exponential fit")
    logd = np.log(ds)
    if np.any(np.diff(logd) > 1e-9 * np.abs(logd[1:])):
        peaks = np.flatnonzero((logd[1:-1] >= logd[:-2]) & (logd[1:-1] >= logd[2:])) + 1
        if peaks.size >= 3:
            warnings.warn("oscillating tail: rate taken from the envelope", RuntimeWarning)
            xs, logd = xs[peaks], logd[peaks]
    slope = np.polyfit(xs, logd, 1)[0]
    if not slope < 0:
        raise FitError(f"tail does not decay (slope {slope:.3g})")
    return float(-slope)


def tail_fit(profile) -> tuple:
    """Tail rates ``(alpha_-, alpha_+)`` of ``|u - u_-|`` and ``|u - u_+|``."""
    x = np.asarray(profile.x)
    vals = np.asarray(profile.values)
    dm = np.max(np.abs(vals - np.asarray(profile.u_minus)[:, None]), axis=0)
    dp = np.max(np.abs(vals - np.asarray(profile.u_plus)[:, None]), axis=0)
    left, right = x < 0, x > 0
    return decay_rate(x[left], dm[left]), decay_rate(x[right], dp[right])


def direction_tail_rates(x, direction) -> tuple:
    d = np.max(np.abs(np.atleast_2d(direction)), axis=0)
    peak = np.max(d)
    left, right = x < 0, x > 0
    return (decay_rate(x[left], d[left], upper=1e-3 * peak, lower=1e-11 * peak),
            decay_rate(x[right], d[right], upper=1e-3 * peak, lower=1e-11 * peak))


# ---------------------------------------------------------------------------
# families

@dataclass
class ProfileFamily:
    """``ell``-parameter family ``u^delta`` around a base profile.

    ``delta[0]`` is translation, ``u^delta(x) = u(x + delta_0)`` at fixed
    shape; the remaining parameters move along the internal directions,
    orthonormal in ``L^2`` and orthogonal to ``u_x``.

    A single shape parameter is read off a precomputed atlas of exact
    orbits, interpolated in a measured coordinate.  Shooting angles are a
    poor chart: near ``u_+`` a change of angle is far below the rounding
    level of the start point, so members shot directly at nearby angles
    are exact orbits whose parameter values carry noise.
    """

    ell: int
    base: ShockProfile
    directions: list  # sampled on base.x, shape (n, nx) each
    masses: list
    tail_rates: list
    _shooter: ProfileShooter = field(default=None, repr=False)
    _tangents: np.ndarray = field(default=None, repr=False)
    _p: np.ndarray = field(default=None, repr=False)
    _Rinv: np.ndarray = field(default=None, repr=False)
    _atlas: "_Atlas" = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def _shape_params(self, delta):
        d = np.asarray(delta, float)
        alpha = self._Rinv @ d[1:]
        return alpha, d[0] - self._p @ alpha

    def shift(self, delta) -> float:
        """Translation applied to the shape member selected by ``delta``."""
        d = np.atleast_1d(np.asarray(delta, float))
        if self.ell == 1:
            return float(d[0])
        if self._atlas is not None:
            return float(d[0] - self._atlas.slope * d[1])
        return float(self._shape_params(d)[1])

    def _shot_for(self, alpha):
        key = tuple(np.round(alpha, 15))
        if key not in self._cache:
            th = self.base.theta + self._tangents @ alpha
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = self._shooter.shoot(th)
        return self._cache[key]

    def member(self, delta, x) -> np.ndarray:
        """``u^delta`` sampled at ``x``."""
        delta = np.atleast_1d(np.asarray(delta, float))
        if delta.size != self.ell:
            raise PreconditionError(f"delta must have {self.ell} components")
        x = np.asarray(x, float)
        if self.ell == 1:
            return self.base(x + delta[0])
        if self._atlas is not None:
            return self._atlas.evaluate(self._shooter.tails, delta[1], x + self.shift(delta))
        alpha, shift = self._shape_params(delta)
        if np.all(alpha == 0):
            return self.base(x + shift)
        shot = self._shot_for(alpha)
        return _evaluate(shot, self._shooter.tails, x + shift)

    def member_jacobian(self, delta, x, h: float = 1e-4) -> np.ndarray:
        """``d u^delta / d delta_i`` at ``x``, shape ``(ell, n, nx)``."""
        delta = np.atleast_1d(np.asarray(delta, float))
        out = []
        base = self.member(delta, x)
        g = self._shooter.g
        out.append(np.column_stack([g(base[:, i]) for i in range(base.shape[1])]))
        for i in range(1, self.ell):
            e = np.zeros(self.ell)
            e[i] = h
            out.append((self.member(delta + e, x) - self.member(delta - e, x)) / (2 * h))
        return np.array(out)

    def direction(self, i, x) -> np.ndarray:
        return self.member_jacobian(np.zeros(self.ell), x)[i]


@dataclass
class _Atlas:
    """Orbits sampled along one shape direction, indexed by a smooth coordinate."""

    sigma: np.ndarray  # increasing
    shots: list
    slope: float  # translation per unit of sigma keeping d/dsigma orthogonal to u_x
    order: int = 7

    def weights(self, s, derivative: bool = False):
        if not self.sigma[self.order // 2] <= s <= self.sigma[-1 - self.order // 2]:
            raise PreconditionError(
                f"shape parameter {s:.4g} outside the sampled range "
                f"[{self.sigma[0]:.3g}, {self.sigma[-1]:.3g}]")
        nearest = np.sort(np.argsort(np.abs(self.sigma - s))[:self.order])
        nodes = self.sigma[nearest]
        w = np.empty(nodes.size)
        for j, sj in enumerate(nodes):
            others = np.delete(nodes, j)
            den = np.prod(sj - others)
            if derivative:
                w[j] = sum(np.prod(np.delete(s - others, i)) for i in range(others.size)) / den
            else:
                w[j] = np.prod(s - others) / den
        return nearest, w

    def evaluate(self, tails, s, x, derivative: bool = False):
        idx, w = self.weights(s, derivative)
        return sum(wj * _evaluate(self.shots[j], tails, x) for j, wj in zip(idx, w))


def _build_atlas(shooter, base, tangent, Rinv, q, ux, span, count):
    x, dx = base.x, base.x[1] - base.x[0]
    nux = _l2(ux, ux, dx)
    shots, coords = [], []
    for s in np.linspace(-span, span, count):
        shot = base._shot if s == 0 else shooter.shoot(base.theta + tangent * (Rinv * s))
        shots.append(shot)
        coords.append(_l2(_evaluate(shot, shooter.tails, x) - base.values, q, dx))
    coords = np.array(coords)
    order = np.argsort(coords)
    coords, shots = coords[order], [shots[i] for i in order]
    if np.any(np.diff(coords) <= 0):
        raise ManifoldDimensionError("shape coordinate is not monotone along the family")
    raw = _Atlas(coords, shots, 0.0)
    d = raw.evaluate(shooter.tails, 0.0, x, derivative=True)
    pt = _l2(d, ux, dx) / nux
    norm = np.sqrt(_l2(d - pt * ux, d - pt * ux, dx))
    return _Atlas(coords * norm, shots, pt / norm)


def _shape_differences(shooter, base, tangents, h, x):
    cols = []
    for j in range(tangents.shape[1]):
        try:
            sp = shooter.shoot(base.theta + h * tangents[:, j])
            sm = shooter.shoot(base.theta - h * tangents[:, j])
        except NoConnectionError:
            cols.append(None)
            continue
        Up = _evaluate(sp, shooter.tails, x)
        Um = _evaluate(sm, shooter.tails, x)
        cols.append((Up - Um) / (2 * h))
    return cols


def _l2(a, b, dx):
    return float(np.sum(a * b) * dx)


def profile_family(model: ModelSystem, base: ShockProfile, h: float = 1e-4,
                   rank_tol: float = 1e-3, atlas_span: float = 0.15,
                   atlas_points: int = 31) -> ProfileFamily:
    """Detect the family dimension by perturbed shooting and build its directions.

    With one shape parameter the members come from an atlas of
    ``atlas_points`` orbits covering roughly ``|delta_1| <= atlas_span``.

    Raises
    ------
    ManifoldDimensionError
        When the detected dimension changes when the shooting perturbation
        is halved.
    """
    shooter = ProfileShooter(model, base.u_minus, base.u_plus)
    x, dx = base.x, base.x[1] - base.x[0]
    ux = base.derivative(x)
    nux = _l2(ux, ux, dx)
    th = base.theta
    # orthonormal tangents of the unit sphere at theta
    m = th.size
    if m > 1:
        P = np.eye(m) - np.outer(th, th)
        U, S, _ = np.linalg.svd(P)
        tangents = U[:, :m - 1]
    else:
        tangents = np.zeros((1, 0))

    def detect(hh):
        cols = _shape_differences(shooter, base, tangents, hh, x)
        keep = [j for j, c in enumerate(cols) if c is not None]
        D = [cols[j] - _l2(cols[j], ux, dx) / nux * ux for j in keep]
        if not D:
            return 0, keep, cols
        G = np.array([[_l2(a, b, dx) for b in D] for a in D])
        ev = np.linalg.eigvalsh(G)
        return int(np.sum(np.sqrt(np.maximum(ev, 0)) > rank_tol * np.sqrt(nux))), keep, cols

    # a unit change of shooting angle can move the orbit by far more than a
    # unit in L^2; shrink the step until the perturbation is ``h`` relative
    # to u_x so the differences stay in the linear regime
    probe = [c for c in _shape_differences(shooter, base, tangents, h, x) if c is not None]
    if probe:
        gain = max(np.sqrt(_l2(c, c, dx) / nux) for c in probe)
        h = h / max(gain, 1.0)
    rank, keep, cols = detect(h)
    rank_half, _, _ = detect(h / 2)
    if rank != rank_half:
        raise ManifoldDimensionError(
            f"family dimension unstable under refinement ({1 + rank} vs {1 + rank_half})")
    ell = 1 + rank
    if ell != shooter.expected_ell:
        warnings.warn(f"detected ell = {ell} differs from the dimension count "
                      f"{shooter.expected_ell}", RuntimeWarning)
    # masses on a grid wide enough for the exponential tails to vanish
    width = max(x[-1], 32.0 / min(min(base.tail_rates), 1.0))
    xw = np.arange(-width, width + 0.5 * dx, dx)
    directions = [ux]
    masses = [base.u_plus - base.u_minus]
    p = np.zeros(0)
    Rinv = np.zeros((0, 0))
    tang = tangents[:, keep][:, :rank] if rank else np.zeros((m, 0))
    atlas = None
    if rank:
        D = np.array([cols[j] for j in keep[:rank]])  # (rank, n, nx)
        p = np.array([_l2(d, ux, dx) / nux for d in D])
        Dp = D - p[:, None, None] * ux[None]
        G = np.array([[_l2(a, b, dx) for b in Dp] for a in Dp])
        Rc = np.linalg.cholesky(G).T  # Dp = Q^T Rc in the L2 sense
        Rinv = np.linalg.inv(Rc)
        Q = np.einsum("jk,jnx->knx", Rinv, Dp)
    if rank == 1:
        atlas = _build_atlas(shooter, base, tang[:, 0], Rinv[0, 0], Q[0], ux, atlas_span,
                             atlas_points)
        uxw = base.derivative(xw)
        for grid, u_x in ((x, ux), (xw, uxw)):
            d = atlas.evaluate(shooter.tails, 0.0, grid, derivative=True)
            q = d - atlas.slope * u_x
            if grid is x:
                directions.append(q)
            else:
                masses.append(np.trapezoid(q, dx=dx, axis=1))
    elif rank:
        if xw.size > x.size:
            colw = _shape_differences(shooter, base, tang, h, xw)
            Dw = np.array(colw)
            uxw = base.derivative(xw)
            Qw = np.einsum("jk,jnx->knx", Rinv, Dw - p[:, None, None] * uxw[None])
        else:
            Qw = Q
        for q, qw in zip(Q, Qw):
            directions.append(q)
            masses.append(np.trapezoid(qw, dx=dx, axis=1))
    rates = [direction_tail_rates(x, d) for d in directions]
    return ProfileFamily(ell, base, directions, masses, rates, shooter, tang, p, Rinv, atlas)
