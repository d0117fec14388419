"""Conservative finite differences for ``u_t + f(u)_x = (B(u) u_x)_x``.

Unknowns live at the nodes of a uniform grid; the two end nodes are pinned
to their initial values.  The interface flux is

    F_{i+1/2} = (f_i + f_{i+1})/2 - B((u_i + u_{i+1})/2) (u_{i+1} - u_i)/dx + D_{i+1/2}

where ``D`` is either a fourth-difference (Kreiss-Oliger type) dissipation
``eps4 * lam * (u_{i+2} - 3u_{i+1} + 3u_i - u_{i-1})`` or the local
Lax-Friedrichs term.  Every update is a flux difference, so the discrete
mass changes only through the two boundary interfaces; that boundary flux
is integrated alongside the solution with the same Runge-Kutta weights.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .errors import BlowUpError, ConfigurationError, NumericalResolutionError, PreconditionError
from .models import ModelSystem


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if self.nx < 256:
            raise ConfigurationError("grids need at least 256 nodes")
        if not self.x_max > self.x_min:
            raise ConfigurationError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def refined(self) -> "Grid1D":
        """Halve the spacing; every coarse node stays a node."""
        return Grid1D(self.x_min, self.x_max, 2 * (self.nx - 1) + 1)


@dataclass
class FieldState:
    t: float
    values: np.ndarray

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.values.copy())


@dataclass(frozen=True)
class SchemeConfig:
    cfl: float = 0.4
    diffusion_number_max: float = 0.4
    boundary: str = "fixed-endstate"
    flux_scheme: str = "central-ko"
    dissipation: float | None = None  # None: 1/32 for real viscosity, 0 otherwise
    integrator: str = "rk2"  # or "imex"
    picard_iterations: int = 2

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ConfigurationError("cfl must lie in (0, 1)")
        if self.boundary != "fixed-endstate":
            raise ConfigurationError("only fixed-endstate boundaries are supported")
        if self.flux_scheme not in ("central-ko", "local-lax-friedrichs"):
            raise ConfigurationError(f"unknown flux scheme {self.flux_scheme!r}")
        if self.integrator not in ("rk2", "imex"):
            raise ConfigurationError(f"unknown integrator {self.integrator!r}")

    def eps4(self, model: ModelSystem) -> float:
        if self.dissipation is not None:
            return float(self.dissipation)
        return 1 / 32 if model.real_viscosity else 0.0


# ---------------------------------------------------------------------------
# spatial operator

class Discretization:
    """Interface fluxes and right-hand sides on a fixed grid."""

    def __init__(self, model: ModelSystem, grid: Grid1D, scheme: SchemeConfig):
        self.model, self.grid, self.scheme = model, grid, scheme
        self.dx = grid.dx
        self.eps4 = scheme.eps4(model)

    def _speeds(self, u):
        lam = self.model.speed_bound(u)
        return np.maximum(lam[:-1], lam[1:])

    def hyperbolic_flux(self, u) -> np.ndarray:
        f = self.model.flux(u)
        F = 0.5 * (f[:, :-1] + f[:, 1:])
        if self.scheme.flux_scheme == "local-lax-friedrichs":
            F -= 0.5 * self._speeds(u) * (u[:, 1:] - u[:, :-1])
        elif self.eps4 > 0:
            up = np.concatenate([u[:, :1], u, u[:, -1:]], axis=1)
            d3 = up[:, 3:] - 3 * up[:, 2:-1] + 3 * up[:, 1:-2] - up[:, :-3]
            F += self.eps4 * self._speeds(u) * d3
        return F

    def interface_viscosity(self, u) -> np.ndarray:
        return self.model.viscosity(0.5 * (u[:, :-1] + u[:, 1:]))

    def viscous_flux(self, u, Bh=None) -> np.ndarray:
        Bh = self.interface_viscosity(u) if Bh is None else Bh
        return np.einsum("ijm,jm->im", Bh, (u[:, 1:] - u[:, :-1]) / self.dx)

    def flux(self, u) -> np.ndarray:
        return self.hyperbolic_flux(u) - self.viscous_flux(u)

    def rhs_from_flux(self, F) -> np.ndarray:
        out = np.zeros((F.shape[0], F.shape[1] + 1))
        out[:, 1:-1] = -(F[:, 1:] - F[:, :-1]) / self.dx
        return out

    def rhs(self, u) -> np.ndarray:
        return self.rhs_from_flux(self.flux(u))

    def residual(self, u) -> np.ndarray:
        """Steady residual at the interior nodes."""
        return self.rhs(u)[:, 1:-1]

    # implicit diffusion -------------------------------------------------

    def diffusion_banded(self, Bh, c: float):
        """Banded matrix of ``I - c D`` with ``D u = (B u_x)_x``, ``B`` frozen
        at the interfaces; unknowns are ordered node by node."""
        n, m = self.model.n, self.grid.nx
        N = n * m
        bw = 2 * n - 1
        ab = np.zeros((2 * bw + 1, N))
        r = c / self.dx ** 2
        idx = np.arange(1, m - 1)
        Bl, Br = Bh[:, :, idx - 1], Bh[:, :, idx]
        for a in range(n):
            rows = idx * n + a
            for b in range(n):
                for off, val in ((-1, -r * Bl[a, b]), (0, r * (Bl[a, b] + Br[a, b])),
                                 (1, -r * Br[a, b])):
                    cols = (idx + off) * n + b
                    ab[bw + rows - cols, cols] += val
            ab[bw, rows] += 1.0
        for i in (0, m - 1):
            ab[bw, i * n + np.arange(n)] += 1.0
        return ab, bw


# ---------------------------------------------------------------------------
# time stepping

@dataclass
class StepInfo:
    boundary_flux: np.ndarray  # integral over the step of F_{1/2} - F_{N-1/2}


def stable_dt(disc: Discretization, u) -> float:
    """Largest step allowed by the CFL and (explicit) diffusion limits."""
    sc = disc.scheme
    amax = float(np.max(disc.model.speed_bound(u)))
    dt = sc.cfl * disc.dx / max(amax, 1e-12)
    if sc.integrator == "rk2":
        bmax = disc.model.diffusion_bound(u)
        if bmax > 0:
            dt = min(dt, sc.diffusion_number_max * disc.dx ** 2 / bmax)
        if disc.eps4 > 0:
            dt = min(dt, 0.5 * disc.dx / (16 * disc.eps4 * max(amax, 1e-12)))
    return dt


def _bflux(F):
    return F[:, 0] - F[:, -1]


def _check(u, t):
    if not np.all(np.isfinite(u)):
        raise BlowUpError("non-finite values in the solution", t)


def step_rk2(disc: Discretization, u, dt):
    F1 = disc.flux(u)
    u1 = u + dt * disc.rhs_from_flux(F1)
    F2 = disc.flux(u1)
    unew = u + 0.5 * dt * (disc.rhs_from_flux(F1) + disc.rhs_from_flux(F2))
    return unew, 0.5 * dt * (_bflux(F1) + _bflux(F2))


_G = 1 - 1 / math.sqrt(2)
_D = 1 - 1 / (2 * _G)


def _implicit_solve(disc, rhs_state, Bh, c):
    n, m = disc.model.n, disc.grid.nx
    ab, bw = disc.diffusion_banded(Bh, c)
    sol = solve_banded((bw, bw), ab, rhs_state.T.reshape(-1))
    return sol.reshape(m, n).T


def step_imex(disc: Discretization, u, dt):
    """ARS(2,2,2): explicit hyperbolic flux, implicit diffusion.

    ``B`` is frozen at the interfaces and refreshed by Picard sweeps when it
    depends on ``u``.
    """
    picard = 0 if disc.model.constant_viscosity else disc.scheme.picard_iterations
    FE0 = disc.hyperbolic_flux(u)
    E0 = disc.rhs_from_flux(FE0)
    Bh = disc.interface_viscosity(u)
    rhs1 = u + dt * _G * E0
    U1 = _implicit_solve(disc, rhs1, Bh, dt * _G)
    for _ in range(picard):
        Bh = disc.interface_viscosity(U1)
        U1 = _implicit_solve(disc, rhs1, Bh, dt * _G)
    FI1 = -disc.viscous_flux(U1, Bh)
    I1 = disc.rhs_from_flux(FI1)
    FE1 = disc.hyperbolic_flux(U1)
    E1 = disc.rhs_from_flux(FE1)
    rhs2 = u + dt * (_D * E0 + (1 - _D) * E1) + dt * (1 - _G) * I1
    Bh2 = Bh
    U2 = _implicit_solve(disc, rhs2, Bh2, dt * _G)
    for _ in range(picard):
        Bh2 = disc.interface_viscosity(U2)
        U2 = _implicit_solve(disc, rhs2, Bh2, dt * _G)
    FI2 = -disc.viscous_flux(U2, Bh2)
    bf = dt * (_D * _bflux(FE0) + (1 - _D) * _bflux(FE1)) \
        + dt * ((1 - _G) * _bflux(FI1) + _G * _bflux(FI2))
    return U2, bf


def step(model: ModelSystem, state: FieldState, dt: float, grid: Grid1D,
         scheme: SchemeConfig = SchemeConfig(), disc: Discretization | None = None):
    """Advance one step of size ``dt``.

    Raises
    ------
    PreconditionError
        When ``dt`` exceeds the stability limit of the chosen integrator.
    BlowUpError
        When the new state is not finite.
    """
    disc = Discretization(model, grid, scheme) if disc is None else disc
    limit = stable_dt(disc, state.values)
    if dt > limit * (1 + 1e-12):
        raise PreconditionError(f"dt = {dt:.3g} exceeds the stability limit {limit:.3g}")
    stepper = step_rk2 if scheme.integrator == "rk2" else step_imex
    with np.errstate(all="ignore"):
        unew, bf = stepper(disc, state.values, dt)
    _check(unew, state.t)
    return FieldState(state.t + dt, unew), StepInfo(bf)


@dataclass
class EvolveResult:
    snapshots: list
    mass_initial: np.ndarray
    boundary_flux: np.ndarray
    mass_defect: float
    steps: int
    boundary_contact: list = field(default_factory=list)


def discrete_mass(grid: Grid1D, u) -> np.ndarray:
    return grid.dx * np.sum(u[:, 1:-1], axis=1)


def evolve(model: ModelSystem, initial: FieldState, T: float, checkpoints, grid: Grid1D,
           scheme: SchemeConfig = SchemeConfig(), dt_max: float | None = None,
           contact_tol: float | None = None) -> EvolveResult:
    """Integrate to ``T`` and return snapshots at the checkpoints.

    The step is the stability limit (or ``dt_max``), shortened to land on
    every checkpoint.  ``contact_tol`` enables the boundary check: any
    checkpoint where the solution within ten cells of an end differs from
    the pinned value by more than ``contact_tol`` is recorded.
    """
    checkpoints = sorted(float(c) for c in checkpoints)
    if T <= 0 or (checkpoints and (checkpoints[0] <= initial.t or checkpoints[-1] > T + 1e-12)):
        raise PreconditionError("checkpoints must lie in (t0, T]")
    if not checkpoints or checkpoints[-1] < T:
        checkpoints.append(T)
    disc = Discretization(model, grid, scheme)
    state = initial.copy()
    m0 = discrete_mass(grid, state.values)
    bflux = np.zeros(model.n)
    snaps, contact = [], []
    nsteps = 0
    ends = state.values[:, [0, -1]].copy()
    for tc in checkpoints:
        while state.t < tc - 1e-12:
            dt = stable_dt(disc, state.values)
            if dt_max is not None:
                dt = min(dt, dt_max)
            remaining = tc - state.t
            nleft = max(1, math.ceil(remaining / dt - 1e-9))
            dt = remaining / nleft
            stepper = step_rk2 if scheme.integrator == "rk2" else step_imex
            with np.errstate(all="ignore"):
                unew, bf = stepper(disc, state.values, dt)
            _check(unew, state.t)
            t_new = tc if nleft == 1 else state.t + dt
            state = FieldState(t_new, unew)
            bflux += bf
            nsteps += 1
        snaps.append(state.copy())
        if contact_tol is not None:
            u = state.values
            dev = max(np.max(np.abs(u[:, :11] - ends[:, :1])),
                      np.max(np.abs(u[:, -11:] - ends[:, 1:])))
            if dev > contact_tol:
                contact.append((state.t, float(dev)))
    m1 = discrete_mass(grid, state.values)
    defect = float(np.max(np.abs(m1 - m0 - bflux)))
    return EvolveResult(snaps, m0, bflux, defect, nsteps, contact)


# ---------------------------------------------------------------------------
# convergence

@dataclass
class ConvergenceReport:
    errors: np.ndarray  # (levels - 1, n) differences between successive levels
    orders: np.ndarray  # per component
    monotone: bool


def refine_convergence(model: ModelSystem, initial, T: float, grid: Grid1D, levels: int = 3,
                       scheme: SchemeConfig = SchemeConfig(), exact=None,
                       dt_max: float | None = None) -> ConvergenceReport:
    """Observed order from successive refinements.

    ``initial(x)`` returns the data on any grid.  With ``exact(x, T)`` the
    errors are measured against it; otherwise against the next finer level
    (Richardson), compared on the coarse nodes.
    """
    if levels < 3:
        raise PreconditionError("need at least three grid levels")
    grids = [grid]
    for _ in range(levels - 1 + (exact is None)):
        grids.append(grids[-1].refined())
    sols = []
    for g in grids:
        # time step proportional to dx so the time error scales with the
        # spatial one
        dtm = None if dt_max is None else dt_max * g.dx / grid.dx
        res = evolve(model, FieldState(0.0, initial(g.x)), T, [T], g, scheme, dtm)
        sols.append(res.snapshots[-1].values)
    errs = []
    if exact is not None:
        for g, u in zip(grids, sols):
            errs.append(np.max(np.abs(u - exact(g.x, T)), axis=1))
    else:
        for k in range(len(grids) - 1):
            fine = sols[k + 1][:, ::2]
            errs.append(np.max(np.abs(sols[k] - fine), axis=1))
    errs = np.array(errs)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log2(errs[-2] / errs[-1])
    monotone = bool(np.all(np.diff(errs, axis=0) < 0))
    if not monotone:
        warnings.warn("errors do not decrease monotonically under refinement", RuntimeWarning)
    return ConvergenceReport(errs, orders, monotone)


# ---------------------------------------------------------------------------
# discrete steady profile

def _colored_jacobian(disc: Discretization, z, stencil: int):
    """Sparse Jacobian of the interior residual by coloured differences."""
    n, m = z.shape
    base = disc.residual(z)
    rows, cols, vals = [], [], []
    ncol = 2 * stencil + 1
    for comp in range(n):
        for color in range(ncol):
            nodes = np.arange(1 + color, m - 1, ncol)
            if nodes.size == 0:
                continue
            h = 1e-7 * np.maximum(1.0, np.abs(z[comp, nodes]))
            zp = z.copy()
            zp[comp, nodes] += h
            d = (disc.residual(zp) - base)  # (n, m-2)
            for j, node in enumerate(nodes):
                lo, hi = max(1, node - stencil), min(m - 2, node + stencil)
                for r in range(lo, hi + 1):
                    for a in range(n):
                        v = d[a, r - 1] / h[j]
                        if v != 0.0:
                            rows.append(a * (m - 2) + (r - 1))
                            cols.append(comp * (m - 2) + (node - 1))
                            vals.append(v)
    N = n * (m - 2)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(N, N))


@dataclass
class DiscreteProfile:
    values: np.ndarray
    unfolding: np.ndarray  # bordering multipliers; zero for an exact steady state
    residual: float
    iterations: int


def discrete_steady_state(model: ModelSystem, grid: Grid1D, scheme: SchemeConfig, guess,
                          directions, tol: float = 1e-12, max_iter: int = 20) -> DiscreteProfile:
    """Steady state of the scheme near ``guess`` by bordered Newton.

    The unknowns are the interior values ``z`` and multipliers ``lam``; the
    equations are ``R(z) + sum_j lam_j psi_j = 0`` together with the phase
    conditions ``<z - guess, psi_j> = 0`` for the sampled family directions
    ``psi_j``.  A vanishing ``lam`` certifies an exact discrete steady
    state; a small one measures the exponentially weak pinning of the
    profile by the finite domain.
    """
    disc = Discretization(model, grid, scheme)
    z = np.array(guess, float)
    n, m = z.shape
    psi = [np.asarray(d, float)[:, 1:-1] for d in directions]
    ell = len(psi)
    P = np.column_stack([p.reshape(-1) for p in psi])
    stencil = 2 if (disc.eps4 > 0 and scheme.flux_scheme == "central-ko") else 1
    lam = np.zeros(ell)
    g0 = z[:, 1:-1].reshape(-1).copy()
    for it in range(1, max_iter + 1):
        R = disc.residual(z).reshape(-1) + P @ lam
        phase = P.T @ (z[:, 1:-1].reshape(-1) - g0)
        res = max(np.max(np.abs(R)), np.max(np.abs(phase)) if ell else 0.0)
        if res < tol:
            return DiscreteProfile(z, lam, float(res), it - 1)
        J = _colored_jacobian(disc, z, stencil)
        K = sparse.bmat([[J, sparse.csr_matrix(P)],
                         [sparse.csr_matrix(P.T), None]], format="csc")
        delta = spsolve(K, -np.concatenate([R, phase]))
        z[:, 1:-1] += delta[:-ell].reshape(n, m - 2) if ell else delta.reshape(n, m - 2)
        lam += delta[-ell:] if ell else 0.0
    R = disc.residual(z).reshape(-1) + P @ lam
    res = float(np.max(np.abs(R)))
    if res > 1e3 * tol:
        raise NumericalResolutionError(f"discrete steady state not converged (residual {res:.3g})")
    return DiscreteProfile(z, lam, res, max_iter)


def with_scheme(scheme: SchemeConfig, **changes) -> SchemeConfig:
    return replace(scheme, **changes)
