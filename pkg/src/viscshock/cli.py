"""Command-line entry point: ``viscshock <subcommand> [options]``."""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import bundled_configs, load_config
from .errors import ViscShockError
from .experiments import (ExperimentError, emit_report, format_rows, run_experiment, write_run,
                          _csv, _header, _num)


def _configs(args) -> list:
    if not args.config:
        raise ViscShockError("--config is required")
    return [load_config(p) for p in args.config]


def _summary(result) -> str:
    d = result.decomp
    lines = [f"modes {d.modes}: masses {d.m_out}", f"delta0 {d.delta0}"]
    dec = result.decomposition
    lines.append(f"{'t':>9}{'|v|_1':>12}{'|v|_2':>12}{'|v|_inf':>12}")
    for i, t in enumerate(dec.times):
        lines.append(f"{t:>9.2f}{dec.v_norms[1][i]:>12.4e}{dec.v_norms[2][i]:>12.4e}"
                     f"{dec.v_norms[np.inf][i]:>12.4e}")
    return "\n".join(lines)


def _run_one(job):
    path, out, seed, mode = job
    cfg = load_config(path)
    stop = "evolve" if mode == "evolve" else None
    try:
        result = run_experiment(cfg, seed=seed, stop_after=stop)
    except ExperimentError as exc:
        return cfg.name, 1, str(exc), ""
    run_dir = write_run(result, out)
    if mode == "evolve":
        text = f"evolved to T = {result.snapshots[-1][0]:g} ({len(result.snapshots)} snapshots)"
    elif mode == "decompose":
        text = _summary(result)
    else:
        text = result.report.table()
    return cfg.name, 0, text, str(run_dir)


def _run_configs(args, mode) -> int:
    cfgs = _configs(args)
    if args.dry_run:
        for c in cfgs:
            print(f"{c.name}: valid (config hash {c.digest(args.seed)})")
        return 0
    jobs = [(p, args.out, args.seed, mode) for p in args.config]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    status = 0
    for name, code, text, run_dir in results:
        if code:
            print(f"{name}: {text}", file=sys.stderr)
            status = 1
            continue
        print(f"== {name} ({run_dir})")
        print(text)
        if mode == "rates":
            print(format_rows(emit_report(run_dir)))
    return status


def cmd_verify_kernels(args) -> int:
    from .acceptance import kernel_criteria
    results = kernel_criteria()
    for r in results:
        print(r.detail())
    if args.out and not args.dry_run:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [[r.number, i.name, _num(i.value), i.target, "pass" if i.passed else "fail"]
                for r in results for i in r.items]
        (out / "kernels.csv").write_text(_header("none") + _csv(
            rows, ["criterion", "item", "measured", "target", "verdict"]))
    return 0 if all(r.passed for r in results) else 1


def cmd_check_model(args) -> int:
    from .models import classify_shock, endstate_spectrum, get_model, stability_checks
    for cfg in _configs(args):
        model = get_model(cfg.model, **cfg.params)
        print(f"== {cfg.name}: model {model.name} (n = {model.n})")
        if cfg.kind == "constant":
            state = np.atleast_1d(cfg.state if cfg.state is not None else model.background)
            spec = endstate_spectrum(model, state)
            print(f"state {state}: speeds {spec.speeds}, beta {spec.beta}, gamma {spec.gamma}")
            continue
        um = np.asarray(cfg.u_minus if cfg.u_minus is not None else model.u_minus, float)
        up = np.asarray(cfg.u_plus if cfg.u_plus is not None else model.u_plus, float)
        sm, sp = endstate_spectrum(model, um), endstate_spectrum(model, up)
        for label, s in (("u-", sm), ("u+", sp)):
            print(f"{label} {s.u}: speeds {s.speeds}, beta {s.beta}, gamma {s.gamma}")
        st = classify_shock(sm, sp)
        print(f"shock: {st.kind}, ell = {st.ell}, outgoing minus {st.outgoing_minus}, "
              f"plus {st.outgoing_plus}")
        r = stability_checks(model, um, up)
        print(f"Majda-Pego theta {r.majda_pego_theta:.4g}, coupling margin "
              f"{r.coupling_margin:.4g}, K2 theta {r.K2_theta:.4g}, flags {r.flags}")
    return 0


def cmd_profile(args) -> int:
    from .profile import profile_residual
    cfgs = _configs(args)
    if args.dry_run:
        return 0
    for cfg in cfgs:
        try:
            res = run_experiment(cfg, seed=args.seed, stop_after="profile")
        except ExperimentError as exc:
            print(f"{cfg.name}: {exc}", file=sys.stderr)
            return 1
        prof = res.extras["profile"]
        print(f"{cfg.name}: ell = {res.ell}, ODE residual {profile_residual(prof):.3g}, "
              f"tail rates {prof.tail_rates}")
        if args.out:
            out = Path(args.out) / cfg.name
            out.mkdir(parents=True, exist_ok=True)
            rows = [[_num(x)] + [_num(v) for v in prof.values[:, j]] for j, x in enumerate(prof.x)]
            (out / "profile.csv").write_text(
                _header(res.digest) + _csv(rows, ["x"] + [f"u{k}" for k in range(prof.n)]))
    return 0


def cmd_report(args) -> int:
    for d in args.run:
        print(format_rows(emit_report(d)))
    return 0


def cmd_acceptance(args) -> int:
    from .acceptance import EXPERIMENTS, NAMES, run_all
    if args.dry_run:
        for number, name in NAMES.items():
            for cfg in map(load_config, EXPERIMENTS.get(number, ())):
                name += f"; {cfg.name} valid (config hash {cfg.digest(args.seed)})"
            print(f"criterion {number:>2}: {name}")
        return 0
    results = run_all(out=args.out, jobs=args.jobs, seed=args.seed)
    for r in results:
        print(r.detail() if args.verbose else r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viscshock",
                                     description="Viscous shock stability experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", metavar="PATH",
                        help="experiment config (repeatable; bundled names also accepted: "
                             + ", ".join(bundled_configs()) + ")")
    common.add_argument("--out", default="runs", metavar="DIR", help="output directory")
    common.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="run independent configs concurrently")
    common.add_argument("--dry-run", action="store_true", help="validate only, write nothing")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for perturbation placement jitter")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-kernels", parents=[common], help="kernel and lemma checks")
    sub.add_parser("check-model", parents=[common], help="spectra, classification, stability")
    sub.add_parser("profile", parents=[common], help="solve the shock profile and family")
    sub.add_parser("evolve", parents=[common], help="evolve the perturbed initial data")
    sub.add_parser("decompose", parents=[common], help="evolve and decompose into v, phi, delta")
    sub.add_parser("rates", parents=[common], help="full pipeline with decay-rate report")
    acc = sub.add_parser("acceptance", parents=[common], help="run the whole acceptance table")
    acc.add_argument("--verbose", action="store_true", help="list every measured item")
    rep = sub.add_parser("report", help="acceptance rows for finished runs")
    rep.add_argument("run", nargs="+", help="run directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "verify-kernels": cmd_verify_kernels,
        "check-model": cmd_check_model,
        "profile": cmd_profile,
        "evolve": lambda a: _run_configs(a, "evolve"),
        "decompose": lambda a: _run_configs(a, "decompose"),
        "rates": lambda a: _run_configs(a, "rates"),
        "acceptance": cmd_acceptance,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ViscShockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
