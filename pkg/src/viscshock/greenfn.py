"""Excited and scattering parts of the Green kernel around a viscous shock.

Only the explicit pieces are evaluated: the scattering coefficients, the
excited kernels ``e_i(y, t)`` and the scattered Gaussian sum ``S``.  For
``y > 0`` the formulas are applied to the mirrored problem ``x -> -x``,
``y -> -y``, with the sides exchanged and every speed negated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BasisError, DomainError, NumericalResolutionError, PreconditionError
from .fitting import FitResult, power_law_fit
from .kernels import errfn, heat_kernel, lp_norm
from .models import EndstateSpectrum

COND_MAX = 1e12


@dataclass
class CharacteristicField:
    side: str  # "minus" or "plus"
    k: int
    speed: float
    beta: float
    l: np.ndarray
    r: np.ndarray


def characteristic_fields(spec: EndstateSpectrum, side: str) -> list:
    if side not in ("minus", "plus"):
        raise PreconditionError("side must be 'minus' or 'plus'")
    if np.max(np.abs(spec.L @ spec.R - np.eye(spec.n))) > 1e-10:
        raise BasisError("left and right eigenvectors are not dual")
    if np.any(spec.beta <= 0):
        raise PreconditionError("effective diffusions must be positive")
    return [CharacteristicField(side, k, float(spec.speeds[k]), float(spec.beta[k]),
                                spec.L[k].copy(), spec.R[:, k].copy()) for k in range(spec.n)]


def solve_scattering(outgoing_minus, outgoing_plus, delta_masses, incoming) -> np.ndarray:
    """Coefficients expressing ``incoming`` in the outgoing-plus-mass basis.

    The returned vector is ordered like the basis columns: outgoing modes
    on the minus side, then on the plus side, then the ``ell`` masses.

    Raises
    ------
    BasisError
        When the columns are not a well-conditioned basis.
    """
    cols = list(outgoing_minus) + list(outgoing_plus) + list(delta_masses)
    M = np.column_stack([np.asarray(c, float) for c in cols]) if cols else np.zeros((0, 0))
    incoming = np.asarray(incoming, float)
    if M.shape != (incoming.size, incoming.size):
        raise BasisError(f"basis has {M.shape[1]} columns for dimension {incoming.size}")
    if np.linalg.cond(M) > COND_MAX:
        raise BasisError("outgoing modes and profile masses are not a basis")
    c = np.linalg.solve(M, incoming)
    if np.max(np.abs(M @ c - incoming)) > 1e-10 * max(1.0, np.max(np.abs(incoming))):
        raise BasisError("scattering reconstruction residual too large")
    return c


@dataclass
class ScatteringSolution:
    """Scattering coefficients for every incoming mode on both sides.

    ``c_out_minus[(k, j)]`` is the coefficient of ``r_j^-`` for incoming
    ``r_k`` (side given by ``incoming_side``), ``c_out_plus`` likewise for
    ``r_j^+`` and ``c_stationary[(k, i)]`` the coefficient of the ``i``-th
    profile mass.  Keys carry the incoming side as a prefix ``("minus", k,
    j)``.  ``pi[i]`` is the ``i``-th mass row of the inverse basis matrix.
    """

    c_out_minus: dict
    c_out_plus: dict
    c_stationary: dict
    pi: list
    basis: np.ndarray
    residual: float


def scattering_solution(fields_minus, fields_plus, delta_masses) -> ScatteringSolution:
    out_m = [f for f in fields_minus if f.speed < 0]
    out_p = [f for f in fields_plus if f.speed > 0]
    masses = [np.asarray(m, float) for m in delta_masses]
    basis = np.column_stack([f.r for f in out_m] + [f.r for f in out_p] + masses)
    inv = None
    cm, cp, cs = {}, {}, {}
    residual = 0.0
    incoming = [f for f in fields_minus if f.speed > 0] + [f for f in fields_plus if f.speed < 0]
    for f in incoming:
        c = solve_scattering([g.r for g in out_m], [g.r for g in out_p], masses, f.r)
        residual = max(residual, float(np.max(np.abs(basis @ c - f.r))))
        for a, g in enumerate(out_m):
            cm[(f.side, f.k, g.k)] = float(c[a])
        for b, g in enumerate(out_p):
            cp[(f.side, f.k, g.k)] = float(c[len(out_m) + b])
        for i in range(len(masses)):
            cs[(f.side, f.k, i)] = float(c[len(out_m) + len(out_p) + i])
    inv = np.linalg.inv(basis)
    nm = len(out_m) + len(out_p)
    pi = [inv[nm + i].copy() for i in range(len(masses))]
    return ScatteringSolution(cm, cp, cs, pi, basis, residual)


def pi_identity_defect(fields_minus, fields_plus, scattering: ScatteringSolution) -> float:
    """Largest mismatch between both sums of the ``pi`` identity and ``pi``."""
    err = 0.0
    for i, p in enumerate(scattering.pi):
        left = sum(scattering.c_stationary[("minus", f.k, i)] * f.l
                   for f in fields_minus if f.speed > 0)
        right = sum(scattering.c_stationary[("plus", f.k, i)] * f.l
                    for f in fields_plus if f.speed < 0)
        err = max(err, float(np.max(np.abs(left - p))), float(np.max(np.abs(right - p))))
    return err


@dataclass
class EKernelSpec:
    delta_directions: list
    fields_minus: list
    fields_plus: list
    coefficients: ScatteringSolution

    @property
    def ell(self) -> int:
        return len(self.coefficients.pi)


def build_ekernel(spec_minus, spec_plus, family) -> EKernelSpec:
    fm = characteristic_fields(spec_minus, "minus")
    fp = characteristic_fields(spec_plus, "plus")
    sc = scattering_solution(fm, fp, family.masses)
    return EKernelSpec(list(family.directions), fm, fp, sc)


def eval_e(spec: EKernelSpec, i: int, y, t: float) -> np.ndarray:
    """``e_i(y, t)`` as an array of shape ``(n,)`` or ``(n, len(y))``."""
    if t <= 0:
        raise DomainError("e_i needs t > 0")
    if not 0 <= i < spec.ell:
        raise PreconditionError(f"i must lie in [0, {spec.ell})")
    y = np.asarray(y, float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    n = spec.fields_minus[0].l.size
    out = np.zeros((n, y.size))
    for side, fields, mask in (("minus", spec.fields_minus, y <= 0),
                               ("plus", spec.fields_plus, y > 0)):
        if not np.any(mask):
            continue
        ys = y[mask]
        for f in fields:
            if (f.speed > 0) != (side == "minus"):
                continue
            c = spec.coefficients.c_stationary[(side, f.k, i)]
            a = abs(f.speed)
            s = np.sqrt(4 * f.beta * t)
            w = errfn((ys + a * t) / s) - errfn((ys - a * t) / s)
            out[:, mask] += c * np.outer(f.l, w)
    return out[:, 0] if scalar else out


def eval_e_y(spec: EKernelSpec, i: int, y, t: float) -> np.ndarray:
    """Closed-form ``y``-derivative of ``e_i``."""
    y = np.atleast_1d(np.asarray(y, float))
    n = spec.fields_minus[0].l.size
    out = np.zeros((n, y.size))
    for side, fields, mask in (("minus", spec.fields_minus, y <= 0),
                               ("plus", spec.fields_plus, y > 0)):
        ys = y[mask]
        for f in fields:
            if (f.speed > 0) != (side == "minus") or not np.any(mask):
                continue
            c = spec.coefficients.c_stationary[(side, f.k, i)]
            a = abs(f.speed)
            w = heat_kernel(ys + a * t, t, f.beta) - heat_kernel(ys - a * t, t, f.beta)
            out[:, mask] += c * np.outer(f.l, w)
    return out


def e_jump(spec: EKernelSpec, i: int, t: float) -> float:
    """``|e_i(0+, t) - e_i(0-, t)|``."""
    return float(np.max(np.abs(eval_e(spec, i, 1e-300, t) - eval_e(spec, i, 0.0, t))))


def _weights(x):
    # e^{-x}/(e^x + e^{-x}) and e^{x}/(e^x + e^{-x}), overflow-free
    wm = 0.5 * (1 - np.tanh(x))
    return wm, 1 - wm


def _beta_bar(xpart, a_j, beta_j, y, a_k, beta_k, t):
    return xpart / (a_j * t) * beta_j + abs(y) / abs(a_k * t) * (a_j / a_k) ** 2 * beta_k


def _gauss(x, var):
    # heat kernel with variance parameter var = beta t; zero where var <= 0
    if var <= 0:
        return 0.0
    return float(heat_kernel(x, var))


def z_jk(a_j: float, a_k: float, y: float, t: float) -> float:
    return a_j * (t - abs(y) / abs(a_k))


def eval_S(fields_minus, fields_plus, scattering: ScatteringSolution, x: float, t: float,
           y: float) -> np.ndarray:
    """Scattered Gaussian part ``S(x, t; y)`` as an ``n x n`` matrix."""
    if t < 1:
        return np.zeros((fields_minus[0].l.size,) * 2)
    if y <= 0:
        near, far, sx, sy, sgn, side = fields_minus, fields_plus, x, y, 1.0, "minus"
    else:
        near, far, sx, sy, sgn, side = fields_plus, fields_minus, -x, -y, -1.0, "plus"
    n = near[0].l.size
    S = np.zeros((n, n))
    wm, wp = _weights(sx)
    for fk in near:
        a_k = sgn * fk.speed
        g = _gauss(sx - sy - a_k * t, fk.beta * t)
        if a_k < 0:
            S += np.outer(fk.r, fk.l) * g
            continue
        S += np.outer(fk.r, fk.l) * g * wm
        # reflected into outgoing modes on the near side
        for fj in near:
            a_j = sgn * fj.speed
            if a_j >= 0:
                continue
            c = scattering.c_out_minus[(side, fk.k, fj.k)] if side == "minus" else \
                scattering.c_out_plus[(side, fk.k, fj.k)]
            bb = _beta_bar(min(sx, 0.0), a_j, fj.beta, sy, a_k, fk.beta, t)
            z = z_jk(a_j, a_k, sy, t)
            S += c * np.outer(fj.r, fk.l) * _gauss(sx - z, bb * t) * wm
        # transmitted into outgoing modes on the far side
        for fj in far:
            a_j = sgn * fj.speed
            if a_j <= 0:
                continue
            c = scattering.c_out_plus[(side, fk.k, fj.k)] if side == "minus" else \
                scattering.c_out_minus[(side, fk.k, fj.k)]
            bb = _beta_bar(max(sx, 0.0), a_j, fj.beta, sy, a_k, fk.beta, t)
            z = z_jk(a_j, a_k, sy, t)
            S += c * np.outer(fj.r, fk.l) * _gauss(sx - z, bb * t) * wp
    return S


def beta_bar(x: float, a_j: float, beta_j: float, y: float, a_k: float, beta_k: float,
             t: float) -> float:
    """Averaged diffusion for a scattered signal; ``x`` enters through its
    part on the side of ``a_j``."""
    xpart = max(x, 0.0) if a_j > 0 else min(x, 0.0)
    return _beta_bar(xpart, a_j, beta_j, y, a_k, beta_k, t)


# ---------------------------------------------------------------------------
# kernel decay

@dataclass
class KernelDecay:
    p: float
    times: np.ndarray
    norms: dict  # quantity -> array over times
    fits: dict  # quantity -> FitResult
    targets: dict
    passed: bool


def _richardson(f, y, t, hy, ht, kind):
    def d(r):
        a, b = hy * r, ht * r
        if kind == "y":
            return (f(y + a, t) - f(y - a, t)) / (2 * a)
        if kind == "t":
            return (f(y, t + b) - f(y, t - b)) / (2 * b)
        return (f(y + a, t + b) - f(y - a, t + b) - f(y + a, t - b)
                + f(y - a, t - b)) / (4 * a * b)

    coarse, fine = d(1.0), d(0.5)
    scale = max(np.max(np.abs(fine)), 1e-300)
    if np.max(np.abs(coarse - fine)) > 1e-3 * scale:
        raise NumericalResolutionError(f"Richardson check failed for e_{kind}")
    return (4 * fine - coarse) / 3


def verify_kernel_decay(spec: EKernelSpec, p: float, t_range=(64.0, 4096.0), n_times: int = 7,
                        i: int = 0, tol: float = 0.08) -> KernelDecay:
    """Fit the ``L^p`` decay of ``e_y``, ``e_t`` and ``e_ty`` in ``t``.

    Derivatives are centred differences with step ``1e-3 max(1, sqrt(t))``
    in both ``y`` and ``t`` (the fronts have width ``sqrt(t)`` and move at
    finite speed), with one Richardson halving; nodes within two steps of
    ``y = 0`` are excluded.
    """
    times = np.geomspace(t_range[0], t_range[1], n_times)
    amax = max(abs(f.speed) for f in spec.fields_minus + spec.fields_plus)
    bmax = max(f.beta for f in spec.fields_minus + spec.fields_plus)
    norms = {"e_y": [], "e_t": [], "e_ty": []}

    def f(y, t):
        return eval_e(spec, i, y, t)

    for t in times:
        h = ht = 1e-3 * max(1.0, np.sqrt(t))
        w = amax * t + 12 * np.sqrt(bmax * t)
        ny = int(min(40001, max(4001, 40 * w / np.sqrt(bmax * t))))
        y = np.linspace(-w, w, ny)
        y = y[np.abs(y) > 2 * h]
        for q, kind in (("e_y", "y"), ("e_t", "t"), ("e_ty", "ty")):
            d = _richardson(f, y, t, h, ht, kind)
            mag = np.sqrt(np.sum(d * d, axis=0))
            norms[q].append(lp_norm(y, mag, p))
    base = -0.5 * (1 - (0 if np.isinf(p) else 1 / p))
    targets = {"e_y": base, "e_t": base, "e_ty": base - 0.5}
    fits, ok = {}, True
    for q in norms:
        norms[q] = np.array(norms[q])
        fit: FitResult = power_law_fit(times, norms[q])
        fits[q] = fit
        ok = ok and abs(fit.slope - targets[q]) <= tol
    return KernelDecay(p, times, norms, fits, targets, ok)


def s_bound_constants(fields_minus, fields_plus, scattering, p: float, times,
                      y0: float = -2.0, width: float = 1.0) -> np.ndarray:
    """``|int S(., t; y) f(y) dy|_{L^p} t^{(1/2)(1 - 1/p)}`` for a unit Gaussian bump ``f``.

    The bump is centred at ``y0`` and carries unit mass in every component
    direction; the returned constants should stay bounded in ``t``.
    """
    out = []
    ys = np.linspace(y0 - 8 * width, y0 + 8 * width, 81)
    fy = heat_kernel(ys - y0, width ** 2 / 4)
    dy = ys[1] - ys[0]
    n = fields_minus[0].l.size
    for t in times:
        amax = max(abs(f.speed) for f in fields_minus + fields_plus)
        w = amax * t + 10 * np.sqrt(t) + 10 * width + abs(y0)
        xs = np.linspace(-w, w, 1201)
        vals = np.zeros((n, xs.size))
        for a, x in enumerate(xs):
            acc = np.zeros((n, n))
            for yv, fv in zip(ys, fy):
                acc += eval_S(fields_minus, fields_plus, scattering, x, t, yv) * fv
            vals[:, a] = acc.sum(axis=1) * dy
        mag = np.sqrt(np.sum(vals ** 2, axis=0))
        e = 0.5 * (1 - (0 if np.isinf(p) else 1 / p))
        out.append(lp_norm(xs, mag, p) * t ** e)
    return np.array(out)
