"""The acceptance table: kernel, Green-kernel, profile and solver suites plus the experiments.

Each ``criterion_*`` function returns a :class:`CriterionResult` whose
``items`` list the individual measurements with their verdicts; the
criterion passes when every item does.
"""
from __future__ import annotations

import filecmp
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import greenfn, kernels
from .config import load_config
from .evolution import FieldState, Grid1D, SchemeConfig, evolve, refine_convergence
from .experiments import ExperimentError, emit_report, run_experiment, write_run
from .models import classify_shock, endstate_spectrum, get_model
from .profile import profile_family, profile_residual, solve_profile

PROFILE_MODELS = ("burgers", "quadratic2", "cubic", "ns_shock")
EXPERIMENTS = {7: ("constant2x2.cfg", "constant_scalar.cfg"), 8: ("lax2x2.cfg",),
               9: ("cubic.cfg",), 10: ("ns.cfg",)}
NAMES = {1: "kernel suite", 2: "Duhamel envelope and L^p rates", 3: "interaction estimates",
         4: "Green kernels", 5: "profiles", 6: "solver", 7: "constant-state experiments",
         8: "Lax shock experiment", 9: "overcompressive experiment",
         10: "real-viscosity experiment", 11: "determinism"}
RUNTIME_LIMITS = {1: 180.0, 2: 600.0, 7: 1200.0}  # seconds


@dataclass
class Item:
    name: str
    value: float
    target: str
    passed: bool

    def line(self) -> str:
        return f"    {'ok ' if self.passed else 'BAD'} {self.name}: {self.value:.6g} ({self.target})"


@dataclass
class CriterionResult:
    number: int
    name: str
    items: list = field(default_factory=list)
    runtime: float = 0.0
    error: str = ""

    @property
    def passed(self) -> bool:
        return not self.error and bool(self.items) and all(i.passed for i in self.items)

    @property
    def measured(self) -> str:
        if self.error:
            return self.error
        bad = [i for i in self.items if not i.passed]
        if bad:
            return "; ".join(f"{i.name} = {i.value:.4g} ({i.target})" for i in bad)
        return f"{len(self.items)} checks"

    def add(self, name, value, target, passed):
        self.items.append(Item(name, float(value), target, bool(passed)))

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}  criterion {self.number:>2} ({self.name}): {self.measured}"

    def detail(self) -> str:
        return "\n".join([self.line()] + [i.line() for i in self.items])


def _timed(number):
    def wrap(fn):
        def run(*args, **kwargs):
            res = CriterionResult(number, NAMES[number])
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fn(res, *args, **kwargs)
            res.runtime = time.perf_counter() - t0
            return res
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def _within(res, name, value, target, tol):
    res.add(name, value, f"{target:+.3g} +- {tol:g}", abs(value - target) <= tol)


def _below(res, name, value, limit, strict=True):
    ok = value < limit if strict else value <= limit
    res.add(name, value, f"{'<' if strict else '<='} {limit:g}", ok)


# ---------------------------------------------------------------------------
# suites


@_timed(1)
def criterion_kernels(res):
    """Heat kernel, diffusion waves, derivative bounds and the Howard estimate."""
    x = np.linspace(-40, 40, 80001)
    for t in (0.5, 1.0, 4.0):
        _below(res, f"heat mass t={t:g}", abs(np.trapezoid(kernels.heat_kernel(x, t), x) - 1), 1e-7)
    y = np.linspace(-60, 60, 120001)
    worst = max(abs(np.trapezoid(kernels.heat_kernel(xi - y, t1) * kernels.heat_kernel(y, t2), y)
                    - kernels.heat_kernel(xi, t1 + t2))
                for t1, t2 in ((1, 1), (1, 4), (0.5, 2)) for xi in (0.0, 1.0, 3.0))
    _below(res, "semigroup defect", worst, 1e-7)
    xw = np.linspace(-80, 80, 160001)
    for m, gamma in ((0.1, 1.0), (-0.5, 0.7), (0.3, 0.0)):
        p = kernels.DiffusionWaveParams(m, 1.0, 0.5, gamma)
        for t in (0.0, 10.0):
            err = abs(np.trapezoid(kernels.diffusion_wave(p, xw, t), xw) - m)
            _below(res, f"wave mass m={m:g} gamma={gamma:g} t={t:g}", err, 1e-7)
    p = kernels.DiffusionWaveParams(0.1, 1.0, 0.0, 1.0)
    xs = np.linspace(-5, 5, 11)

    def wave(x, t):
        return kernels.diffusion_wave(p, x, t)

    resid = []
    for h in (0.1, 0.05, 0.025):
        ft = (wave(xs, 1 + h) - wave(xs, 1 - h)) / (2 * h)
        fxx = (wave(xs + h, 1) - 2 * wave(xs, 1) + wave(xs - h, 1)) / h ** 2
        f2x = (wave(xs + h, 1) ** 2 - wave(xs - h, 1) ** 2) / (2 * h)
        resid.append(np.max(np.abs(ft - fxx + f2x)))
    for k, order in enumerate(np.log2(np.array(resid[:-1]) / np.array(resid[1:]))):
        _within(res, f"wave residual order {k}", order, 2.0, 0.3)
    ratios = kernels.derivative_bound_ratios()
    for key, vals in ratios.items():
        v = np.array(list(vals.values()))
        _below(res, f"global constant spread {key}", v.max() / v.min() - 1, 1e-6)
    C = kernels.howard_constant(2.0)
    coarse = np.linspace(0, 200, 200001)
    fine = np.linspace(0, 200, 400001)
    for label, f in (("constant", lambda s: np.ones_like(s)),
                     ("algebraic", lambda s: (1 + s) ** -0.5),
                     ("gaussian", lambda s: np.exp(-s ** 2 / 8))):
        worst, change = 0.0, 0.0
        for z in (1, 2, 4, 8, 16, 32, 64):
            r1 = kernels.howard_bound_check(coarse, f(coarse), 1.0, z, 2.0, C).ratio
            r2 = kernels.howard_bound_check(fine, f(fine), 1.0, z, 2.0, C).ratio
            worst = max(worst, r2 / C)
            change = max(change, abs(r2 / r1 - 1))
        _below(res, f"Howard ratio / C, {label}", worst, 1.0, strict=False)
        _below(res, f"Howard refinement change, {label}", change, 1e-6)


@_timed(2)
def criterion_prop21(res, t_list=(1, 4, 16, 64, 256), fit_times=(16, 32, 64, 128, 256)):
    """Envelope stability at ``t_list`` and ``L^p`` slopes over ``fit_times`` for both sources."""
    targets = {1: -0.25, 2: -0.5, np.inf: -0.75}
    for label, src in (("K^2", kernels.SquaredGaussianSource(speed=1.0)),
                       ("K_x", kernels.GaussianDerivativeSource(speed=1.0))):
        out = kernels.verify_prop21(t_list, source=src, max_spread=2.0)
        _below(res, f"{label} sup-ratio spread", out.spread, 2.0)
        _below(res, f"{label} refinement change", out.refinement_change, 0.05)
        snaps = dict(out.snapshots)
        kernel = kernels.GaussianSignal(0.0, 1.0)
        for t in fit_times:
            if t not in snaps:
                grid = kernels.QuadratureGrid.for_problem(kernel, src, t)
                snaps[t] = kernels.duhamel_convolve(kernel, src, grid, t)
        for p, target in targets.items():
            fit = kernels.lp_norm_rates(snaps, p, t_min=min(fit_times), t_max=max(fit_times))
            _within(res, f"{label} L{p} slope", fit.slope, target, 0.08)


@_timed(3)
def criterion_interactions(res):
    cross = kernels.interaction_lemma_check("cross", {"a": 1.0, "b": -1.0}, (16.0, 256.0))
    _within(res, "opposite-sign cross power", cross.fit.slope, -0.5, 0.05)
    for label, mode, params in (("product", "product", {"a1": 1.0, "a2": -1.0}),
                                ("weighted", "weighted", {"a": 1.0}),
                                ("same-sign cross", "cross", {"a": 1.0, "b": 1.0}),
                                ("exponential weight", "exp", {"a": 1.0})):
        r = kernels.interaction_lemma_check(mode, params, (4.0, 40.0))
        res.add(f"{label} rate", r.fit.rate, "> 0", r.fit.rate > 0)


def _shock(name):
    model = get_model(name)
    prof = solve_profile(model)
    fam = profile_family(model, prof)
    sm, sp = endstate_spectrum(model, prof.u_minus), endstate_spectrum(model, prof.u_plus)
    return model, prof, fam, sm, sp


@_timed(4)
def criterion_green(res, models=PROFILE_MODELS, continuity_time=4096.0):
    """Scattering residual, continuity of ``e_i`` across ``y = 0`` and kernel decay.

    The jump of ``e_i`` at the origin is the difference of the two
    one-sided ``errfn`` sums; it closes exponentially in ``t`` and is
    measured at ``continuity_time``.
    """
    for name in models:
        _, _, fam, sm, sp = _shock(name)
        ek = greenfn.build_ekernel(sm, sp, fam)
        _below(res, f"{name} scattering residual", ek.coefficients.residual, 1e-10)
        jump = max(greenfn.e_jump(ek, i, continuity_time) for i in range(ek.ell))
        _below(res, f"{name} e_i jump at y=0", jump, 1e-8)
        for p in (1, 2, np.inf):
            kd = greenfn.verify_kernel_decay(ek, p)
            for q, fit in kd.fits.items():
                _within(res, f"{name} {q} L{p} slope", fit.slope, kd.targets[q], 0.08)


@_timed(5)
def criterion_profiles(res, models=PROFILE_MODELS):
    model = get_model("burgers")
    prof = solve_profile(model)
    x = np.linspace(-20, 20, 4001)
    _below(res, "burgers tanh deviation", np.max(np.abs(prof(x)[0] + np.tanh(x / 2))), 1e-9)
    for name in models:
        _, prof, fam, sm, sp = _shock(name)
        _below(res, f"{name} ODE residual", profile_residual(prof), 1e-8)
        rates = list(prof.tail_rates) + [r for pair in fam.tail_rates for r in pair]
        res.add(f"{name} smallest tail rate", min(rates), "> 0", min(rates) > 0)
        ell = classify_shock(sm, sp).ell
        res.add(f"{name} ell (classified {ell})", fam.ell, f"== {ell}", fam.ell == ell)


@_timed(6)
def criterion_solver(res, models=PROFILE_MODELS, T=10.0, dx=0.05):
    """Conservation, drift of sampled profiles and the observed order.

    The drift is that of the profile sampled on the grid, so it measures
    the scheme's truncation error at spacing ``dx``.
    """
    scheme = SchemeConfig(integrator="imex")
    grid = Grid1D(-60.0, 60.0, int(round(120 / dx)) + 1)
    for name in models:
        model = get_model(name)
        prof = solve_profile(model)
        u0 = prof(grid.x)
        bump = 0.05 * np.exp(-(grid.x + 3) ** 2 / 4)
        pert = evolve(model, FieldState(0.0, u0 + bump), T, [T], grid, scheme)
        _below(res, f"{name} mass defect", pert.mass_defect, 1e-10, strict=False)
        still = evolve(model, FieldState(0.0, u0), T, [T], grid, scheme)
        _below(res, f"{name} profile drift", np.max(np.abs(still.snapshots[-1].values - u0)), 5e-5)
    model = get_model("quadratic2")
    state = model.background

    def smooth(x):
        return state[:, None] + 0.1 * np.exp(-x ** 2 / 8) * np.array([[1.0], [-0.5]])

    for integrator in ("rk2", "imex"):
        conv = refine_convergence(model, smooth, 2.0, Grid1D(-30.0, 30.0, 301), levels=3,
                                  scheme=SchemeConfig(integrator=integrator), dt_max=0.02)
        res.add(f"{integrator} refinement order", float(np.min(conv.orders)), ">= 1.8",
                bool(np.min(conv.orders) >= 1.8))


# ---------------------------------------------------------------------------
# experiments


def _experiment(job):
    name, out, seed = job
    cfg = load_config(name)
    # CPU time of this process, so concurrent jobs do not inflate each other's runtime
    t0 = time.process_time()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = run_experiment(cfg, seed=seed)
    except ExperimentError as exc:
        return name, None, str(exc), time.process_time() - t0
    run_dir = write_run(result, out)
    return name, str(run_dir), "", time.process_time() - t0


def _gate_runtime(res: CriterionResult) -> CriterionResult:
    limit = RUNTIME_LIMITS.get(res.number)
    if limit is not None:
        _below(res, "runtime s", res.runtime, limit)
    return res


def _read_ell(run_dir) -> int:
    for line in (Path(run_dir) / "provenance.txt").read_text().splitlines():
        if line.startswith("ell ="):
            return int(line.split("=", 1)[1])
    return -1


def _ell_detected(res, outcomes):
    for name, run_dir, error, _ in outcomes:
        if not error:
            ell = _read_ell(run_dir)
            res.add(f"{Path(run_dir).name} ell detected", ell, "== 2", ell == 2)


def _score(number, outcomes, extra=None) -> CriterionResult:
    res = CriterionResult(number, NAMES[number])
    for name, run_dir, error, elapsed in outcomes:
        res.runtime += elapsed
        if error:
            res.error = f"{name}: {error}"
            continue
        for row in emit_report(run_dir):
            if row.verdict == "info":
                continue
            value = float(row.measured) if row.verdict != "N/A" else np.nan
            res.add(f"{Path(run_dir).name} {row.item}", value, row.target, row.verdict == "pass")
    if extra is not None:
        extra(res, outcomes)
    return _gate_runtime(res)


def run_experiments(out, jobs: int = 1, seed: int = 0, numbers=(7, 8, 9, 10)) -> list:
    todo = [(name, out, seed) for n in numbers for name in EXPERIMENTS[n]]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_experiment, todo))
    else:
        done = [_experiment(j) for j in todo]
    by_name = {d[0]: d for d in done}
    results = []
    for n in numbers:
        extra = {9: _ell_detected, 10: _ns_profile_drift}.get(n)
        results.append(_score(n, [by_name[name] for name in EXPERIMENTS[n]], extra))
    return results


def _ns_profile_drift(res, outcomes):
    sub = criterion_solver(models=("ns_shock",))
    for item in sub.items:
        if "drift" in item.name:
            res.items.append(item)


def criterion_determinism(config: str = "burgers_lax.cfg", seed: int = 0) -> CriterionResult:
    """Two runs of one configuration must produce byte-identical artifacts."""
    res = CriterionResult(11, NAMES[11])
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        dirs = []
        for out in (a, b):
            _, run_dir, error, _ = _experiment((config, out, seed))
            if error:
                res.error = error
                return res
            emit_report(run_dir)
            dirs.append(Path(run_dir))
        names = sorted(p.name for p in dirs[0].iterdir())
        same = [filecmp.cmp(dirs[0] / n, dirs[1] / n, shallow=False) for n in names]
        res.add("files compared", len(names), "> 0", len(names) > 0)
        res.add("differing files", len(same) - sum(same), "== 0", all(same))
    res.runtime = time.perf_counter() - t0
    return res


def kernel_criteria() -> list:
    return [_gate_runtime(r) for r in
            (criterion_kernels(), criterion_prop21(), criterion_interactions())]


def run_all(out=None, jobs: int = 1, seed: int = 0) -> list:
    """Every criterion in order; experiment runs go to ``out`` (a temporary directory if None)."""
    results = kernel_criteria()
    results += [criterion_green(), criterion_profiles(), criterion_solver()]
    if out is None:
        with tempfile.TemporaryDirectory() as tmp:
            results += run_experiments(tmp, jobs, seed)
    else:
        results += run_experiments(out, jobs, seed)
    results.append(criterion_determinism(seed=seed))
    return results
