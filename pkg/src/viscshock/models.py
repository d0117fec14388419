"""Viscous conservation laws ``u_t + f(u)_x = (B(u) u_x)_x`` and their endstate data.

Every model works in the shock frame (stationary profiles).  State arrays
have the component index first, so ``u`` may be a single state of shape
``(n,)`` or a field of shape ``(n, N)``; flux, Jacobian, Hessian and
viscosity broadcast over the trailing axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, HyperbolicityError, UnsupportedShockError


def _stack(entries, u):
    """Build an array from nested lists, broadcasting scalars to ``u[0]``."""
    shape = np.shape(u[0])

    def build(e):
        if isinstance(e, list):
            return np.stack([build(x) for x in e])
        return np.broadcast_to(np.asarray(e, dtype=float), shape)

    return build(entries)


@dataclass
class ModelSystem:
    """A system ``u_t + f(u)_x = (B(u) u_x)_x``.

    ``hessian(u)[i, j, k] = d^2 f_i / du_j du_k`` and
    ``viscosity_derivative(u)[i, j, k] = d B_ij / du_k``.  ``block_rank`` is
    the number of rows of ``B`` that are not identically zero; the zero rows
    come first.
    """

    name: str
    n: int
    flux: Callable
    jacobian: Callable
    hessian: Callable
    viscosity: Callable
    viscosity_derivative: Callable
    block_rank: int
    params: dict = field(default_factory=dict)
    u_minus: np.ndarray | None = None
    u_plus: np.ndarray | None = None
    background: np.ndarray | None = None
    constant_viscosity: bool = False
    max_speed: Callable | None = None

    @property
    def real_viscosity(self) -> bool:
        return self.block_rank < self.n

    def speed_bound(self, u) -> np.ndarray:
        """Spectral radius of ``df`` at every node of a field ``(n, N)``."""
        if self.max_speed is not None:
            return self.max_speed(u)
        J = np.moveaxis(self.jacobian(u), (0, 1), (-2, -1))
        return np.max(np.abs(np.linalg.eigvals(J)), axis=-1)

    def diffusion_bound(self, u) -> float:
        B = np.moveaxis(self.viscosity(u), (0, 1), (-2, -1))
        return float(np.max(np.abs(np.linalg.eigvals(B))))


# ---------------------------------------------------------------------------
# built-in models

def burgers(viscosity: float = 1.0, u_minus: float = 1.0, u_plus: float = -1.0,
            background: float = 0.5) -> ModelSystem:
    """Scalar Burgers ``f = u^2/2`` with constant viscosity."""
    b = float(viscosity)
    if b <= 0:
        raise ConfigurationError("viscosity must be positive")
    return ModelSystem(
        name="burgers", n=1,
        flux=lambda u: 0.5 * np.asarray(u) ** 2,
        jacobian=lambda u: _stack([[u[0]]], u),
        hessian=lambda u: _stack([[[1.0]]], u),
        viscosity=lambda u: _stack([[b]], u),
        viscosity_derivative=lambda u: _stack([[[0.0]]], u),
        block_rank=1, params={"viscosity": b},
        u_minus=np.array([u_minus]), u_plus=np.array([u_plus]),
        background=np.array([background]), constant_viscosity=True,
        max_speed=lambda u: np.abs(u[0]),
    )


# eigenbasis of the quadratic 2x2 flux; w = L u diagonalises it
_R2 = np.array([[1.0, 2.0], [1.0, -1.0]])
_L2 = np.linalg.inv(_R2)


def quadratic2(coupling: float = 0.25) -> ModelSystem:
    """``f = (u1^2/2 + u2^2, u2^2/2 + u1 u2)`` with ``B = R [[1,k],[k,1]] L``.

    In ``w = L u`` the flux is ``3 w_i^2 / 2`` componentwise, so ``B = I``
    would decouple the two fields completely; ``coupling`` restores
    interaction through the viscosity.  ``coupling = 0`` gives ``B = I``.
    """
    k = float(coupling)
    if not abs(k) < 1:
        raise ConfigurationError("coupling must lie in (-1, 1)")
    B = _R2 @ np.array([[1.0, k], [k, 1.0]]) @ _L2
    return ModelSystem(
        name="quadratic2", n=2,
        flux=lambda u: np.stack([0.5 * u[0] ** 2 + u[1] ** 2, 0.5 * u[1] ** 2 + u[0] * u[1]]),
        jacobian=lambda u: _stack([[u[0], 2 * u[1]], [u[1], u[0] + u[1]]], u),
        hessian=lambda u: _stack([[[1, 0], [0, 2]], [[0, 1], [1, 1]]], u),
        viscosity=lambda u: _stack(B.tolist(), u),
        viscosity_derivative=lambda u: _stack(np.zeros((2, 2, 2)).tolist(), u),
        block_rank=2, params={"coupling": k},
        u_minus=np.array([2 / 3, 1 / 6]), u_plus=np.array([0.0, -0.5]),
        background=np.array([2 / 3, 1 / 6]), constant_viscosity=True,
        max_speed=lambda u: 3 * np.max(np.abs(np.tensordot(_L2, u, axes=1)), axis=0),
    )


def cubic(c: float = 0.4, transport: float = 1.0, flux_coupling: float = 0.1,
          viscous_coupling: tuple = (0.3, 0.3)) -> ModelSystem:
    """Rotationally symmetric cubic flux plus one transported field.

    ``f' = |u'|^2 u' - s u'`` for ``u' = (u1, u2)`` and
    ``f3 = b u3 + u3^2/2 + k_f |u'|^2``, with ``B`` upper triangular with unit
    diagonal and ``B[0:2, 2] = viscous_coupling``.  The endstates are
    ``(1, 0, 0)`` and ``(-c, 0, u3+)``; ``s = c^2 - c + 1`` makes both
    Rankine-Hugoniot conditions hold in this frame.
    """
    if not 0 < c < 1 / np.sqrt(3):
        raise ConfigurationError("need 0 < c < 1/sqrt(3) for an overcompressive shock")
    s = c * c - c + 1
    b, kf = float(transport), float(flux_coupling)
    k1, k2 = map(float, viscous_coupling)
    u3p = -b + np.sqrt(b * b + 2 * kf * (1 - c * c))
    B = [[1.0, 0.0, k1], [0.0, 1.0, k2], [0.0, 0.0, 1.0]]

    def flux(u):
        r2 = u[0] ** 2 + u[1] ** 2
        return np.stack([(r2 - s) * u[0], (r2 - s) * u[1], b * u[2] + 0.5 * u[2] ** 2 + kf * r2])

    def jacobian(u):
        r2 = u[0] ** 2 + u[1] ** 2
        return _stack([[r2 + 2 * u[0] ** 2 - s, 2 * u[0] * u[1], 0],
                       [2 * u[0] * u[1], r2 + 2 * u[1] ** 2 - s, 0],
                       [2 * kf * u[0], 2 * kf * u[1], b + u[2]]], u)

    def hessian(u):
        x, y = u[0], u[1]
        return _stack([[[6 * x, 2 * y, 0], [2 * y, 2 * x, 0], [0, 0, 0]],
                       [[2 * y, 2 * x, 0], [2 * x, 6 * y, 0], [0, 0, 0]],
                       [[2 * kf, 0, 0], [0, 2 * kf, 0], [0, 0, 1]]], u)

    return ModelSystem(
        name="cubic", n=3, flux=flux, jacobian=jacobian, hessian=hessian,
        viscosity=lambda u: _stack(B, u),
        viscosity_derivative=lambda u: _stack(np.zeros((3, 3, 3)).tolist(), u),
        block_rank=3,
        params={"c": c, "shock_speed": s, "transport": b, "flux_coupling": kf,
                "viscous_coupling": (k1, k2)},
        u_minus=np.array([1.0, 0.0, 0.0]), u_plus=np.array([-c, 0.0, u3p]),
        background=np.array([1.0, 0.0, 0.0]), constant_viscosity=True,
        max_speed=lambda u: np.maximum.reduce([
            np.abs(3 * (u[0] ** 2 + u[1] ** 2) - s), np.abs(u[0] ** 2 + u[1] ** 2 - s),
            np.abs(b + u[2])]),
    )


def isentropic_ns(gamma: float = 5 / 3, frame_speed: float = 0.0,
                  u_minus=None, u_plus=None) -> ModelSystem:
    """Lagrangian isentropic Navier-Stokes, state ``(v, u)``.

    ``v_t - u_x - s v_x = 0`` and ``u_t + p(v)_x - s u_x = (u_x / v)_x`` with
    ``p(v) = v^(-gamma)`` in a frame moving with speed ``s``.
    """
    g, s = float(gamma), float(frame_speed)
    if g < 1:
        raise ConfigurationError("gamma must be >= 1")

    def flux(u):
        v = u[0]
        if np.any(v <= 0):
            raise HyperbolicityError("specific volume must stay positive")
        return np.stack([-u[1] - s * v, v ** -g - s * u[1]])

    def jacobian(u):
        v = u[0]
        return _stack([[-s, -1.0], [-g * v ** (-g - 1), -s]], u)

    def hessian(u):
        v = u[0]
        return _stack([[[0, 0], [0, 0]], [[g * (g + 1) * v ** (-g - 2), 0], [0, 0]]], u)

    return ModelSystem(
        name="isentropic_ns", n=2, flux=flux, jacobian=jacobian, hessian=hessian,
        viscosity=lambda u: _stack([[0, 0], [0, 1 / u[0]]], u),
        viscosity_derivative=lambda u: _stack(
            [[[0, 0], [0, 0]], [[0, 0], [-1 / u[0] ** 2, 0]]], u),
        block_rank=1, params={"gamma": g, "frame_speed": s},
        u_minus=None if u_minus is None else np.asarray(u_minus, float),
        u_plus=None if u_plus is None else np.asarray(u_plus, float),
        background=np.array([1.0, 0.0]),
        max_speed=lambda u: abs(s) + np.sqrt(g * u[0] ** (-g - 1)),
    )


def ns_shock(gamma: float = 5 / 3, v_minus: float = 1.0, v_plus: float = 1.5,
             u_minus: float = 0.0) -> ModelSystem:
    """Isentropic NS in the frame of the shock joining ``v_minus`` to ``v_plus``."""
    if v_plus <= v_minus:
        raise ConfigurationError("a compressive 2-shock needs v_plus > v_minus")
    dp = v_plus ** -gamma - v_minus ** -gamma
    s = np.sqrt(-dp / (v_plus - v_minus))
    up = u_minus - s * (v_plus - v_minus)
    m = isentropic_ns(gamma, s, [v_minus, u_minus], [v_plus, up])
    m.name = "ns_shock"
    m.params.update(v_minus=v_minus, v_plus=v_plus)
    return m


def linear(A, B) -> ModelSystem:
    """Linear flux ``f = A u`` with constant viscosity ``B``."""
    A = np.atleast_2d(np.asarray(A, float))
    Bm = np.atleast_2d(np.asarray(B, float))
    n = A.shape[0]
    rank = int(np.sum(np.any(Bm != 0, axis=1)))
    return ModelSystem(
        name="linear", n=n,
        flux=lambda u: np.tensordot(A, np.asarray(u, float), axes=1),
        jacobian=lambda u: _stack(A.tolist(), u),
        hessian=lambda u: _stack(np.zeros((n, n, n)).tolist(), u),
        viscosity=lambda u: _stack(Bm.tolist(), u),
        viscosity_derivative=lambda u: _stack(np.zeros((n, n, n)).tolist(), u),
        block_rank=rank, params={"A": A.tolist(), "B": Bm.tolist()},
        background=np.zeros(n), constant_viscosity=True,
    )


REGISTRY = {
    "burgers": burgers,
    "quadratic2": quadratic2,
    "cubic": cubic,
    "isentropic_ns": isentropic_ns,
    "ns_shock": ns_shock,
}


def get_model(name: str, **params) -> ModelSystem:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ConfigurationError(f"unknown model {name!r}; known: {sorted(REGISTRY)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from None


def check_derivatives(model: ModelSystem, u, h: float = 1e-6) -> float:
    """Largest mismatch between hand-coded and finite-difference derivatives."""
    u = np.asarray(u, float)
    err = 0.0
    for k in range(model.n):
        e = np.zeros(model.n)
        e[k] = h
        dJ = (model.flux(u + e) - model.flux(u - e)) / (2 * h)
        err = max(err, np.max(np.abs(dJ - model.jacobian(u)[:, k])))
        dH = (model.jacobian(u + e) - model.jacobian(u - e)) / (2 * h)
        err = max(err, np.max(np.abs(dH - model.hessian(u)[:, :, k])))
        dB = (model.viscosity(u + e) - model.viscosity(u - e)) / (2 * h)
        err = max(err, np.max(np.abs(dB - model.viscosity_derivative(u)[:, :, k])))
    return float(err)


# ---------------------------------------------------------------------------
# endstate spectra

@dataclass
class EndstateSpectrum:
    u: np.ndarray
    speeds: np.ndarray
    L: np.ndarray  # rows are left eigenvectors
    R: np.ndarray  # columns are right eigenvectors
    beta: np.ndarray
    gamma: np.ndarray

    @property
    def n(self) -> int:
        return self.speeds.size


@dataclass
class CouplingTensors:
    Gamma: np.ndarray  # Gamma[i, j, k]: coefficient of r_i in (1/2) d2f(r_j, r_k)
    b: np.ndarray  # b[i, j]: coefficient of r_i in B r_j


def endstate_spectrum(model: ModelSystem, u) -> EndstateSpectrum:
    """Ordered characteristic data of ``df(u)``.

    Right eigenvectors have unit length and their first nonzero component
    positive; ``L = R^{-1}``.
    """
    u = np.asarray(u, float)
    J = model.jacobian(u)
    lam, V = np.linalg.eig(J)
    radius = max(np.max(np.abs(lam)), 1e-300)
    if np.max(np.abs(lam.imag)) > 1e-10 * radius:
        raise HyperbolicityError(f"complex characteristic speeds {lam}")
    lam, V = lam.real, V.real
    order = np.argsort(lam)
    lam, V = lam[order], V[:, order]
    if lam.size > 1 and np.min(np.diff(lam)) < 1e-8 * radius:
        raise HyperbolicityError(f"repeated characteristic speeds {lam}")
    if np.min(np.abs(lam)) < 1e-8 * radius:
        raise HyperbolicityError(f"zero characteristic speed at {u}")
    for i in range(lam.size):
        r = V[:, i] / np.linalg.norm(V[:, i])
        first = r[np.flatnonzero(np.abs(r) > 1e-12)[0]]
        V[:, i] = r * np.sign(first)
    L = np.linalg.inv(V)
    B = model.viscosity(u)
    beta = np.einsum("ij,jk,ki->i", L, B, V)
    H = model.hessian(u)
    gamma = 0.5 * np.einsum("il,ljk,ji,ki->i", L, H, V, V)
    return EndstateSpectrum(u, lam, L, V, beta, gamma)


def coupling_coefficients(spectrum: EndstateSpectrum, model: ModelSystem) -> CouplingTensors:
    """Expand ``(1/2) d2f(r_j, r_k)`` and ``B r_j`` in the right eigenbasis."""
    L, R = spectrum.L, spectrum.R
    H = model.hessian(spectrum.u)
    Gamma = 0.5 * np.einsum("il,lab,aj,bk->ijk", L, H, R, R)
    b = L @ model.viscosity(spectrum.u) @ R
    # reconstruction residuals
    rec = np.einsum("ijk,mi->mjk", Gamma, R) - 0.5 * np.einsum("lab,aj,bk->ljk", H, R, R)
    rec_b = R @ b - model.viscosity(spectrum.u) @ R
    if max(np.max(np.abs(rec)), np.max(np.abs(rec_b))) > 1e-10 * max(1.0, np.max(np.abs(H))):
        raise HyperbolicityError("eigenbasis too ill-conditioned for coupling tensors")
    return CouplingTensors(Gamma, b)


# ---------------------------------------------------------------------------
# stability conditions

@dataclass
class StabilityReport:
    majda_pego: bool
    majda_pego_theta: float
    genuine_coupling: bool
    coupling_margin: float
    K2: bool
    K2_theta: float
    flags: dict


def default_frequency_grid() -> np.ndarray:
    return np.logspace(-3, 3, 400)


def _symbol_max(J, B, k):
    return np.max(np.linalg.eigvals(-1j * k * J - k * k * B).real)


def stability_checks(model: ModelSystem, u_minus, u_plus, k_grid=None,
                     xi_grid=None) -> StabilityReport:
    """Majda-Pego, genuine coupling and the compensator condition at both endstates.

    ``majda_pego_theta`` is ``-max_k max Re sigma(-ik df - k^2 B) / k^2`` and
    ``K2_theta`` the same quantity scaled by ``(1 + xi^2) / xi^2``.  Both pass
    when positive.  ``flags`` records the leading-order limits: the low
    frequency limit needs every ``beta_i > 0``; the high frequency limit
    needs ``Re sigma(B) > 0`` for the parabolic scaling, which fails for real
    viscosity so that Majda-Pego then holds only on the sampled grid.
    """
    k_grid = default_frequency_grid() if k_grid is None else np.asarray(k_grid, float)
    xi_grid = default_frequency_grid() if xi_grid is None else np.asarray(xi_grid, float)
    mp, k2, margin = np.inf, np.inf, np.inf
    low, high = True, True
    for u in (u_minus, u_plus):
        u = np.asarray(u, float)
        J, B = model.jacobian(u), model.viscosity(u)
        mp = min(mp, min(-_symbol_max(J, B, k) / k**2 for k in k_grid))
        k2 = min(k2, min(-_symbol_max(J, B, x) * (1 + x * x) / (x * x) for x in xi_grid))
        lam, V = np.linalg.eig(J)
        for i in range(lam.size):
            w = V[:, i]
            margin = min(margin, np.linalg.norm(B @ w) / np.linalg.norm(w))
        spec = endstate_spectrum(model, u)
        low = low and bool(np.all(spec.beta > 0))
        high = high and bool(np.min(np.linalg.eigvals(B).real) > 0)
    return StabilityReport(
        majda_pego=bool(mp > 0), majda_pego_theta=float(mp),
        genuine_coupling=bool(margin > 1e-8), coupling_margin=float(margin),
        K2=bool(k2 > 0), K2_theta=float(k2),
        flags={"low_frequency": low, "high_frequency_parabolic": high},
    )


# ---------------------------------------------------------------------------
# shock classification

@dataclass
class ShockType:
    kind: str
    ell: int
    outgoing_minus: list
    outgoing_plus: list


def classify_shock(spec_minus: EndstateSpectrum, spec_plus: EndstateSpectrum) -> ShockType:
    """Count incoming characteristics; ``ell = incoming - n``."""
    n = spec_minus.n
    incoming = int(np.sum(spec_minus.speeds > 0) + np.sum(spec_plus.speeds < 0))
    ell = incoming - n
    if ell <= 0:
        raise UnsupportedShockError(f"undercompressive shock (ell = {ell}) is not supported")
    out_m = [int(i) for i in np.flatnonzero(spec_minus.speeds < 0)]
    out_p = [int(i) for i in np.flatnonzero(spec_plus.speeds > 0)]
    return ShockType("Lax" if ell == 1 else "overcompressive", ell, out_m, out_p)


def rankine_hugoniot_defect(model: ModelSystem, u_minus, u_plus) -> float:
    return float(np.max(np.abs(model.flux(np.asarray(u_plus, float))
                               - model.flux(np.asarray(u_minus, float)))))
