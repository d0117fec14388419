"""Heat-kernel calculus, closed-form diffusion waves and Duhamel quadrature.

All Gaussians use the convention ``K(x, t) = (4 pi t)^(-1/2) exp(-x^2 / 4t)``,
so ``K(x, beta t)`` solves ``u_t = beta u_xx`` with unit mass.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import erfc, erfcinv

from .errors import (
    ConfigurationError,
    DomainError,
    NumericalResolutionError,
    PreconditionError,
)
from .fitting import FitResult, exponential_fit, power_law_fit

TAIL_TOL = 1e-12
SQRT_PI = np.sqrt(np.pi)


def _check_time(t):
    if np.any(np.asarray(t) <= 0):
        raise DomainError("heat kernel requires t > 0")


def heat_kernel(x, t, beta=1.0):
    """Gaussian density ``K(x, beta t)``.

    Parameters
    ----------
    x : array_like
        Evaluation points.
    t : float or array_like
        Time, strictly positive.
    beta : float
        Diffusion coefficient.
    """
    _check_time(t)
    bt = beta * np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (4.0 * bt)) / np.sqrt(4.0 * np.pi * bt)


def heat_kernel_dx(x, t, beta=1.0):
    """First x-derivative of ``K(x, beta t)``."""
    bt = beta * np.asarray(t, dtype=float)
    return -np.asarray(x, dtype=float) / (2.0 * bt) * heat_kernel(x, t, beta)


def heat_kernel_dxx(x, t, beta=1.0):
    """Second x-derivative of ``K(x, beta t)``."""
    bt = beta * np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return (x * x / (4.0 * bt * bt) - 1.0 / (2.0 * bt)) * heat_kernel(x, t, beta)


def heat_kernel_dt(x, t, beta=1.0):
    """Time derivative of ``K(x, beta t)`` (equals ``beta K_xx``)."""
    return beta * heat_kernel_dxx(x, t, beta)


def errfn(z):
    """Error function rescaled to the range (0, 1): ``(1 + erf z) / 2``."""
    return 0.5 * erfc(-np.asarray(z, dtype=float))


def gaussian_halfwidth(beta_t, tail_tol=TAIL_TOL):
    """Half-width outside which ``K(., beta t)`` carries less than ``tail_tol``."""
    w_rule = 8.0 * np.sqrt(beta_t)
    w_tail = 2.0 * np.sqrt(beta_t) * float(erfcinv(tail_tol))
    return max(w_rule, w_tail)


@dataclass(frozen=True)
class GaussianSignal:
    """Heat kernel translating with speed ``a``: ``K(x - a tau, beta tau)``.

    ``tau = t + start_time_shift``; diffusion waves of the decomposition
    use a shift of 1 so that they are smooth at ``t = 0``.
    """

    speed: float = 0.0
    beta: float = 1.0
    start_time_shift: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError("GaussianSignal needs beta > 0")

    def _tau(self, t):
        tau = np.asarray(t, dtype=float) + self.start_time_shift
        if np.any(tau <= 0):
            raise DomainError("GaussianSignal evaluated before its start time")
        return tau

    def __call__(self, x, t):
        tau = self._tau(t)
        return heat_kernel(np.asarray(x) - self.speed * tau, tau, self.beta)

    def dx(self, x, t):
        tau = self._tau(t)
        return heat_kernel_dx(np.asarray(x) - self.speed * tau, tau, self.beta)

    def dxx(self, x, t):
        tau = self._tau(t)
        return heat_kernel_dxx(np.asarray(x) - self.speed * tau, tau, self.beta)


@dataclass(frozen=True)
class DiffusionWaveParams:
    """Parameters of a nonlinear diffusion wave.

    The wave solves ``phi_t + a phi_x - beta phi_xx = -gamma (phi^2)_x``
    with ``phi(., -1) = m delta``.
    """

    mass: float
    beta: float = 1.0
    speed: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError("diffusion wave needs beta > 0")


def _wave_parts(p: DiffusionWaveParams, x, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= -1):
        raise DomainError("diffusion wave defined for t > -1")
    tau = t + 1.0
    xi = np.asarray(x, dtype=float) - p.speed * tau
    eta = xi / np.sqrt(4.0 * p.beta * tau)
    gauss = np.exp(-eta * eta)
    lam = p.gamma * p.mass / p.beta
    return tau, xi, eta, gauss, lam


def diffusion_wave(p: DiffusionWaveParams, x, t):
    """Closed-form diffusion wave ``phi(x, t)``.

    With ``lam = gamma m / beta`` and ``eta = (x - a tau) / sqrt(4 beta tau)``,
    ``tau = t + 1``,

    ``phi = sqrt(beta) expm1(lam) / gamma / sqrt(pi tau) * exp(-eta^2)
    / (2 + expm1(lam) erfc(eta))``,

    which carries mass exactly ``m`` and reduces to ``m K(x - a tau, beta tau)``
    when ``gamma = 0``.
    """
    tau, xi, eta, gauss, lam = _wave_parts(p, x, t)
    if p.mass == 0.0:
        return np.zeros(np.broadcast(xi, tau).shape)
    if abs(lam) < 1e-14:
        return p.mass * gauss / np.sqrt(4.0 * np.pi * p.beta * tau)
    e = np.expm1(lam)
    amp = np.sqrt(p.beta) * e / p.gamma
    return amp * gauss / (np.sqrt(np.pi * tau) * (2.0 + e * erfc(eta)))


def diffusion_wave_dx(p: DiffusionWaveParams, x, t):
    """Spatial derivative of :func:`diffusion_wave`."""
    tau, xi, eta, gauss, lam = _wave_parts(p, x, t)
    phi = diffusion_wave(p, x, t)
    if p.mass == 0.0:
        return phi
    out = -xi / (2.0 * p.beta * tau) * phi
    if abs(lam) >= 1e-14:
        e = np.expm1(lam)
        denom = 2.0 + e * erfc(eta)
        out = out + phi * 2.0 * e * gauss / (SQRT_PI * np.sqrt(4.0 * p.beta * tau) * denom)
    return out


# ---------------------------------------------------------------------------
# Duhamel sources

@dataclass(frozen=True)
class SquaredGaussianSource:
    """``K(y - b s, beta s)^2``; its Duhamel integrand behaves like ``s^(-1/2)``."""

    speed: float = 0.0
    beta: float = 1.0
    singular_exponent: float = 0.5

    def __call__(self, y, s):
        return heat_kernel(y - self.speed * s, s, self.beta) ** 2

    def support(self, s):
        return self.speed * s, 0.5 * self.beta * s


@dataclass(frozen=True)
class GaussianDerivativeSource:
    """``K_x(y - b s, beta s)``; bounded Duhamel integrand."""

    speed: float = 0.0
    beta: float = 1.0
    singular_exponent: float = 0.0

    def __call__(self, y, s):
        return heat_kernel_dx(y - self.speed * s, s, self.beta)

    def support(self, s):
        return self.speed * s, self.beta * s


@dataclass(frozen=True)
class DiffusionWaveSquaredSource:
    """``phi(y, s)^2`` for a diffusion wave started at ``s = -1``."""

    wave: DiffusionWaveParams
    singular_exponent: float = 0.0

    def __call__(self, y, s):
        return diffusion_wave(self.wave, y, s) ** 2

    def support(self, s):
        return self.wave.speed * (s + 1.0), self.wave.beta * (s + 1.0)


@dataclass(frozen=True)
class DiffusionWaveDerivativeSource:
    """``phi_x(y, s)`` for a diffusion wave started at ``s = -1``."""

    wave: DiffusionWaveParams
    singular_exponent: float = 0.0

    def __call__(self, y, s):
        return diffusion_wave_dx(self.wave, y, s)

    def support(self, s):
        return self.wave.speed * (s + 1.0), self.wave.beta * (s + 1.0)


@dataclass
class QuadratureGrid:
    """Uniform x-grid plus the time-quadrature controls.

    ``substeps`` is the number of uniform panels covering the interior of
    ``[0, t]``; the panels next to ``s = 0`` and ``s = t`` are graded
    geometrically (ratio 2) down to ``min_step_fraction * t``.
    """

    x_min: float
    x_max: float
    nx: int
    time_nodes: Sequence[float] = field(default_factory=list)
    substeps: int = 64
    min_step_fraction: float = 1e-3

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ConfigurationError("QuadratureGrid needs x_max > x_min")
        if self.nx < 3:
            raise ConfigurationError("QuadratureGrid needs nx >= 3")
        nodes = list(self.time_nodes)
        if any(b <= a for a, b in zip(nodes, nodes[1:])) or any(v <= 0 for v in nodes):
            raise ConfigurationError("time nodes must be positive and increasing")

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    def refined(self, level: int = 1) -> "QuadratureGrid":
        """Grid with spacing, finest time step and panel width halved ``level`` times."""
        f = 2**level
        return QuadratureGrid(self.x_min, self.x_max, (self.nx - 1) * f + 1,
                              list(self.time_nodes), self.substeps * f,
                              self.min_step_fraction / f)

    @classmethod
    def for_problem(cls, kernel: GaussianSignal, source, t: float, substeps: int | None = None,
                    points_per_width: float = 4.0, min_step_fraction: float = 1e-3):
        """Auto-sized grid that meets ``TAIL_TOL`` for one output time.

        By default the uniform panels are ``sqrt(t)/16`` wide (at least 64 of
        them), so that the time integrand, which varies on the diffusive
        scale ``sqrt t``, is resolved uniformly in ``t``.
        """
        if substeps is None:
            substeps = max(64, int(np.ceil(16.0 * np.sqrt(t))))
        lo, hi = _required_interval(kernel, source, t)
        s_min = min_step_fraction * t
        widths = [np.sqrt(2.0 * kernel.beta * s_min)]
        c, var = source.support(s_min)
        widths.append(np.sqrt(2.0 * var))
        dx = min(widths) / points_per_width
        nx = int(np.ceil((hi - lo) / dx)) + 1
        return cls(lo, hi, nx, [t], substeps, min_step_fraction)


def _required_interval(kernel: GaussianSignal, source, t):
    centers = [0.0, kernel.speed * t]
    spreads = [kernel.beta * t]
    for s in (0.0, t):
        c, var = source.support(max(s, 1e-300))
        centers.append(c)
        spreads.append(var)
    for s in (0.0, t):
        c, var = source.support(max(s, 1e-300))
        centers.append(c + kernel.speed * (t - s))
    w = gaussian_halfwidth(max(spreads) + kernel.beta * t)
    return min(centers) - w, max(centers) + w


def check_grid(grid: QuadratureGrid, kernel: GaussianSignal, source, t: float):
    """Raise ConfigurationError when the grid truncates Gaussian mass above tail_tol."""
    lo, hi = _required_interval(kernel, source, t)
    if grid.x_min > lo + 1e-9 or grid.x_max < hi - 1e-9:
        raise ConfigurationError(
            f"grid [{grid.x_min:.3g}, {grid.x_max:.3g}] narrower than required "
            f"[{lo:.3g}, {hi:.3g}] for tail tolerance {TAIL_TOL:g}")


def time_quadrature(t: float, substeps: int = 64, min_step_fraction: float = 1e-3,
                    singular_exponent: float = 0.5):
    """Nodes and weights for ``int_0^t F(s) ds`` with endpoint grading.

    The nodes are graded geometrically (ratio 2) from ``min_step_fraction*t``
    near both endpoints and uniform in between.  On ``[0, t/2]`` the trapezoid
    rule is applied in the variable ``sigma = sqrt(s)``, which makes an
    ``s^(-1/2)`` endpoint behaviour smooth; on ``[t/2, t]`` it is the plain
    trapezoid rule.  The endpoints themselves are never evaluated: at ``s = 0``
    the integrand is extrapolated as ``c s^(-q)`` and at ``s = t`` linearly.
    """
    h_min = min_step_fraction * t
    h_mid = t / substeps
    half = 0.5 * t
    graded = [0.0]
    step = h_min
    while graded[-1] + step < min(h_mid, half) * (1 - 1e-12):
        graded.append(graded[-1] + step)
        step = graded[-1]
    start = graded[-1]
    n_uniform = max(1, int(np.ceil((half - start) / h_mid)))
    left = np.concatenate([np.array(graded), np.linspace(start, half, n_uniform + 1)[1:]])
    right = t - left[::-1]
    nodes = np.concatenate([left, right[1:]])

    weights = np.zeros_like(nodes)
    nl = left.size
    sig = np.sqrt(left)
    # first panel integrated exactly for F = s^(-q) (c0 + c1 s), fitted at
    # the first two nodes
    q = singular_exponent
    s1, s2 = left[1], left[2]
    i0 = s1 ** (1 - q) / (1 - q)
    i1 = s1 ** (2 - q) / (2 - q)
    # c0 + c1 s_k = F_k s_k^q, k = 1, 2
    det = s2 - s1
    weights[1] += (i0 * s2 - i1) * s1 ** q / det
    weights[2] += (i1 - i0 * s1) * s2 ** q / det
    # trapezoid in sigma for int G dsigma, G = 2 sigma F
    for k in range(1, nl - 1):
        h = sig[k + 1] - sig[k]
        weights[k] += h * sig[k]
        weights[k + 1] += h * sig[k + 1]
    # plain trapezoid on the right half; F(t) by linear extrapolation
    for k in range(nl - 1, nodes.size - 1):
        h = nodes[k + 1] - nodes[k]
        weights[k] += 0.5 * h
        weights[k + 1] += 0.5 * h
    w_end = weights[-1]
    weights[-2] += 2.0 * w_end
    weights[-3] -= w_end
    keep = np.ones(nodes.size, dtype=bool)
    keep[0] = False
    keep[-1] = False
    return nodes[keep], weights[keep]


def duhamel_convolve(kernel: GaussianSignal, source, grid: QuadratureGrid, t: float,
                     check: bool = True):
    """Duhamel integral ``u(x,t) = int_0^t int g_x(x-y, t-s) source(y,s) dy ds``.

    ``g`` is the translating heat kernel described by ``kernel``.  The inner
    integral is the trapezoid rule on ``grid`` (a discrete convolution
    evaluated by FFT), the outer one uses :func:`time_quadrature`.

    Returns
    -------
    x, u : ndarray
    """
    if t <= 0:
        raise DomainError("duhamel_convolve needs t > 0")
    if check:
        check_grid(grid, kernel, source, t)
    x = grid.x
    dx = grid.dx
    nodes, weights = time_quadrature(t, grid.substeps, grid.min_step_fraction,
                                     getattr(source, "singular_exponent", 0.0))
    offsets = dx * np.arange(-(grid.nx - 1), grid.nx)
    u = np.zeros(grid.nx)
    for s, w in zip(nodes, weights):
        h = source(x, s)
        if not np.any(h):
            continue
        tau = t - s
        g = heat_kernel_dx(offsets - kernel.speed * tau, tau, kernel.beta)
        conv = fftconvolve(h, g, mode="full")[grid.nx - 1: 2 * grid.nx - 1]
        u += w * dx * conv
    return x, u


def prop21_bound(x, t):
    """Pointwise envelope with unit constant.

    ``t^(-1/4) (K(x, 4t) + K(x - t, 4t))`` plus, for ``sqrt t <= x <= t - sqrt t``,
    ``t^(-1) x^(-1/2) + t^(-1/2) (t - x)^(-1)``.
    """
    x = np.asarray(x, dtype=float)
    b = t ** -0.25 * (heat_kernel(x, 4 * t) + heat_kernel(x - t, 4 * t))
    rt = np.sqrt(t)
    mid = (x >= rt) & (x <= t - rt)
    xm = np.where(mid, x, rt)
    extra = 1.0 / (t * np.sqrt(xm)) + 1.0 / (rt * np.maximum(t - xm, rt))
    return b + np.where(mid, extra, 0.0)


@dataclass
class Prop21Result:
    """Outcome of :func:`verify_prop21` for one source variant."""

    source_name: str
    times: np.ndarray
    ratio_max: np.ndarray
    ratio_max_refined: np.ndarray
    fitted_C: float
    spread: float
    refinement_change: float
    passed: bool
    table: list
    snapshots: dict


def _lp_norms(x, u):
    dx = x[1] - x[0]
    au = np.abs(u)
    return {1: float(au.sum() * dx), 2: float(np.sqrt((au * au).sum() * dx)),
            np.inf: float(au.max())}


def verify_prop21(t_list=(1, 4, 16, 64, 256), source=None, substeps: int | None = None,
                  points_per_width: float = 4.0, refinement_tol: float = 0.05,
                  max_spread: float = 2.0):
    """Check the pointwise envelope for the Duhamel solution at dyadic times.

    The ratio ``|u|/bound`` is maximised over the sampled grid for each time.
    The fitted constant is the largest ratio at the coarse level; the check
    passes when the ratios at all times stay within ``max_spread`` of each
    other and one refinement changes none of them by more than 2x.

    Raises
    ------
    NumericalResolutionError
        If a refinement changes the sup ratio by more than ``refinement_tol``.
    """
    if source is None:
        source = SquaredGaussianSource(speed=1.0)
    if any(t < 1 for t in t_list):
        raise PreconditionError("envelope is stated for t >= 1")
    kernel = GaussianSignal(0.0, 1.0)
    ratios, ratios_ref, table, snaps = [], [], [], {}
    for t in t_list:
        grid = QuadratureGrid.for_problem(kernel, source, t, substeps, points_per_width)
        x, u = duhamel_convolve(kernel, source, grid, t)
        r = np.abs(u) / prop21_bound(x, t)
        x2, u2 = duhamel_convolve(kernel, source, grid.refined(1), t)
        r2 = np.abs(u2) / prop21_bound(x2, t)
        ratios.append(float(r.max()))
        ratios_ref.append(float(r2.max()))
        snaps[t] = (x, u)
        stride = max(1, x.size // 200)
        table.extend((t, float(xi), float(ri)) for xi, ri in zip(x[::stride], r[::stride]))
    ratios = np.array(ratios)
    ratios_ref = np.array(ratios_ref)
    change = float(np.max(np.abs(ratios_ref / ratios - 1.0)))
    if change > refinement_tol:
        raise NumericalResolutionError(
            f"sup ratio changed by {100 * change:.1f}% under refinement")
    both = np.concatenate([ratios, ratios_ref])
    spread = float(both.max() / both.min())
    passed = bool(spread < max_spread)
    name = type(source).__name__
    return Prop21Result(name, np.array(t_list, dtype=float), ratios, ratios_ref,
                        float(ratios.max()), spread, change, passed, table, snaps)


def lp_norm(x, u, p):
    """Discrete ``L^p`` norm on a uniform grid (p may be ``np.inf``)."""
    return _lp_norms(np.asarray(x), np.asarray(u))[np.inf if np.isinf(p) else int(p)]


def lp_norm_rates(snapshots, p, t_min=None, t_max=None) -> FitResult:
    """Fitted exponent of ``|u(., t)|_{L^p}`` versus ``t``.

    Parameters
    ----------
    snapshots : mapping ``t -> (x, u)``
    p : 1, 2 or ``np.inf``
    """
    times = sorted(t for t in snapshots
                   if (t_min is None or t >= t_min) and (t_max is None or t <= t_max))
    if len(times) < 4:
        raise PreconditionError("rate fit needs at least four snapshot times")
    norms = [lp_norm(*snapshots[t], p) for t in times]
    return power_law_fit(times, norms)


# ---------------------------------------------------------------------------
# elementary Gaussian inequalities

def stlem_ratio(t_values=(1, 4, 16, 64, 256, 1024), nx=801, ns=41):
    """Largest ``exp(-(x +- s)^2/4t) / exp(-x^2/8t)`` over ``0 <= s <= sqrt t``.

    Returns a dict ``t -> max ratio``; the sample contains ``x = -+2 sqrt t``
    where the supremum ``e^(1/4)`` is attained.
    """
    out = {}
    for t in t_values:
        rt = np.sqrt(t)
        x = np.concatenate([np.linspace(-12 * rt, 12 * rt, nx), [-2 * rt, 2 * rt]])
        s = np.linspace(0.0, rt, ns)
        X, S = np.meshgrid(x, s)
        best = 0.0
        for sign in (1.0, -1.0):
            ex = -(X + sign * S) ** 2 / (4 * t) + X ** 2 / (8 * t)
            best = max(best, float(np.exp(ex.max())))
        out[t] = best
    return out


def derivative_bound_ratios(t_values=(0.1, 1, 10, 100), nx=2001):
    """Sup ratios for the heat-kernel derivative and size bounds.

    Keys: ``'gx'`` for ``|g_x| / (t^-1/2 g(x,2t))``, ``'gt'`` for
    ``|g_t| / (t^-1 g(x,2t))`` and ``'g'`` for ``g / t^-1/2``; each maps
    ``t -> ratio``.
    """
    res = {"gx": {}, "gt": {}, "g": {}}
    for t in t_values:
        x = np.linspace(-30 * np.sqrt(t), 30 * np.sqrt(t), nx)
        g2 = heat_kernel(x, 2 * t)
        res["gx"][t] = float(np.max(np.abs(heat_kernel_dx(x, t)) / (t ** -0.5 * g2)))
        res["gt"][t] = float(np.max(np.abs(heat_kernel_dt(x, t)) / (g2 / t)))
        res["g"][t] = float(np.max(heat_kernel(x, t)) * np.sqrt(t))
    return res


@dataclass(frozen=True)
class HowardResult:
    lhs: float
    scale: float
    ratio: float
    constant: float
    passed: bool


def howard_bound_check(sigma, f, a: float, z: float, omega: float,
                       constant: float | None = None) -> HowardResult:
    """Compare ``int_0^inf exp(-a (z - s)^2) f(s) ds`` with ``a^(-1/2) f(z/omega)``.

    Parameters
    ----------
    sigma, f : ndarray
        Samples of a nonincreasing function on ``[0, sigma_max]``; the
        integral is truncated there.
    constant : float, optional
        ``C(omega)``; defaults to :func:`howard_constant`.
    """
    sigma = np.asarray(sigma, dtype=float)
    f = np.asarray(f, dtype=float)
    if sigma[0] != 0 or np.any(np.diff(sigma) <= 0):
        raise PreconditionError("sigma must start at 0 and increase")
    if np.any(np.diff(f) > 1e-14 * max(1.0, abs(f[0]))):
        raise PreconditionError("f must be nonincreasing")
    if not np.isfinite(f[0]):
        raise PreconditionError("f(0) must be finite")
    floor = np.exp(-(a / 2) * (1 - 1 / omega) ** 2 * sigma ** 2)
    live = floor > 0
    if np.any(f[live] <= 0):
        raise PreconditionError("f must dominate a Gaussian of the stated width")
    integrand = np.exp(-a * (z - sigma) ** 2) * f
    lhs = float(np.trapezoid(integrand, sigma))
    scale = float(np.interp(z / omega, sigma, f) / np.sqrt(a))
    C = howard_constant(omega) if constant is None else constant
    ratio = lhs / scale
    return HowardResult(lhs, scale, ratio, C, bool(ratio <= C))


def howard_constant(omega: float) -> float:
    """Module-wide ``C(omega)``: largest ratio over a reference family.

    The family covers constants, Gaussians of the critical width and
    algebraic decay, for ``a`` in {1/4, 1, 4} and dyadic ``z`` up to 64.
    """
    sigma = np.linspace(0.0, 400.0, 160001)
    fams = [np.ones_like(sigma), (1 + sigma) ** -0.5, (1 + sigma) ** -2.0]
    best = 0.0
    for a in (0.25, 1.0, 4.0):
        fams_a = fams + [np.exp(-(a / 2) * (1 - 1 / omega) ** 2 * sigma ** 2)]
        for f in fams_a:
            for z in (0.5, 1, 2, 4, 8, 16, 32, 64):
                integrand = np.exp(-a * (z - sigma) ** 2) * f
                lhs = np.trapezoid(integrand, sigma)
                best = max(best, lhs * np.sqrt(a) / np.interp(z / omega, sigma, f))
    return float(best)


# ---------------------------------------------------------------------------
# interaction lemmas

@dataclass
class InteractionResult:
    mode: str
    times: np.ndarray
    values: np.ndarray
    law: str
    fit: FitResult
    passed: bool


def _product_norm(a1, a2, b1, b2, t, p):
    c = 0.5 * (a1 + a2) * t
    w = abs(a1 - a2) * t / 2 + gaussian_halfwidth(max(b1, b2) * t)
    x = np.linspace(c - w, c + w, 20001)
    v = heat_kernel(x - a1 * t, t, b1) * heat_kernel(x - a2 * t, t, b2)
    return lp_norm(x, v, p)


def _weighted_norm(a, h, t, p):
    w = abs(a) * t + gaussian_halfwidth(t)
    x = np.linspace(-w, w, 40001)
    return lp_norm(x, h(x) * heat_kernel(x - a * t, t), p)


def _cross_integral(a, b, t, substeps=64):
    src = SquaredGaussianSource(speed=b)
    nodes, weights = time_quadrature(t, substeps, 1e-3, 0.5)
    total = 0.0
    for s, w in zip(nodes, weights):
        tau = t - s
        lo = min(-a * tau, b * s) - gaussian_halfwidth(max(tau, s))
        hi = max(-a * tau, b * s) + gaussian_halfwidth(max(tau, s))
        width = min(np.sqrt(tau), np.sqrt(s / 2))
        n = int(min(200001, max(2001, 8 * (hi - lo) / width)))
        y = np.linspace(lo, hi, n)
        f = heat_kernel(y + a * tau, tau) * src(y, s)
        total += w * np.trapezoid(f, y)
    return total


def _exp_weight_integral(a, t):
    w = abs(a) * t + gaussian_halfwidth(t) + 40.0
    y = np.linspace(-w, w, 200001)
    return float(np.trapezoid(heat_kernel(y + a * t, t) * np.exp(-np.abs(y)), y))


def interaction_lemma_check(mode: str, params: dict | None = None, t_range=(4.0, 64.0),
                            n_times: int = 13) -> InteractionResult:
    """Quadrature check of one Gaussian interaction estimate.

    Modes
    -----
    ``'product'``
        ``|K(x-a1 t, b1 t) K(x-a2 t, b2 t)|_{L^p}``; exponential decay.
    ``'weighted'``
        ``|h(x) K(x - a t, t)|_{L^p}`` with ``h`` decaying on the side ``a``
        points to; exponential decay.
    ``'cross'``
        ``int_0^t int g(y + a(t-s), t-s) g(y - b s, s)^2 dy ds``; exponential
        for same-sign speeds, ``t^(-1/2)`` for opposite signs.
    ``'exp'``
        ``int g(y + a t, t) exp(-|y|) dy``; ``t^(-1/2) exp(-eta t)``.
    """
    params = dict(params or {})
    times = np.linspace(t_range[0], t_range[1], n_times)
    p = params.get("p", np.inf)
    if mode == "product":
        a1, a2 = params.get("a1", 1.0), params.get("a2", -1.0)
        if a1 == a2:
            raise PreconditionError("product estimate needs a1 != a2")
        b1, b2 = params.get("beta1", 1.0), params.get("beta2", 1.0)
        vals = [_product_norm(a1, a2, b1, b2, t, p) for t in times]
        law = "exponential"
    elif mode == "weighted":
        a = params.get("a", 1.0)
        h = params.get("h", (lambda x: 1.0 / (1.0 + np.exp(np.sign(a) * x))))
        far = np.sign(a) * 40.0
        if a == 0 or abs(h(np.array([far]))[0]) > 1e3 * np.exp(-40.0):
            raise PreconditionError("h must decay like exp(-|x|) on the side a points to")
        vals = [_weighted_norm(a, h, t, p) for t in times]
        law = "exponential"
    elif mode == "cross":
        a, b = params.get("a", 1.0), params.get("b", -1.0)
        if a == 0 or b == 0:
            raise PreconditionError("cross estimate needs nonzero speeds")
        vals = [_cross_integral(a, b, t, params.get("substeps", 64)) for t in times]
        law = "exponential" if a * b > 0 else "power"
    elif mode == "exp":
        a = params.get("a", 1.0)
        if a == 0:
            raise PreconditionError("exponential-weight estimate needs a != 0")
        vals = [_exp_weight_integral(a, t) for t in times]
        law = "exponential"
    else:
        raise PreconditionError(f"unknown interaction mode {mode!r}")
    vals = np.array(vals)
    if law == "exponential":
        fit = exponential_fit(times, vals)
        passed = fit.rate > 0
    else:
        fit = power_law_fit(times, vals, t_min=times[len(times) // 2])
        passed = bool(abs(fit.slope + 0.5) <= 0.05)
    return InteractionResult(mode, times, vals, law, fit, bool(passed))
