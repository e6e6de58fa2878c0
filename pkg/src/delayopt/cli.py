"""Command-line entry point: ``python3 -m delayopt <command> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import bounds as bnd
from .checks import SUITES
from .experiment import (ArchitectureSpec, ConfigError, ExperimentConfig, ObjectiveSpec, ScheduleSpec,
                         bounds_overlay, overlay_coverage, run_experiment, speedup_sweep, sweep_csv, _jsonable)
from .oracle import KINDS, estimate_constants, load_csv, make_synthetic, save_csv
from .optimizer import METHODS, reference_optimum


def _number_or(token: str):
    def parse(s: str):
        if s == token:
            return s
        try:
            return int(s)
        except ValueError:
            return float(s)
    return parse


def _add_objective(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("objective")
    g.add_argument("--kind", choices=KINDS, default="logistic")
    g.add_argument("--N", type=int, default=1000)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic dataset")
    g.add_argument("--radius", type=float, default=None, help="l2-ball radius (default: unconstrained)")
    g.add_argument("--active", type=int, default=None, help="nonzeros per logistic row")
    g.add_argument("--spectrum", type=float, default=1.0, help="ratio of largest to smallest column scale")
    g.add_argument("--data", default=None, help="CSV dataset written by gen-data")


def _add_run(p: argparse.ArgumentParser) -> None:
    _add_objective(p)
    g = p.add_argument_group("run")
    g.add_argument("--config", default=None, help="JSON experiment config (flags below are then ignored)")
    g.add_argument("--seed", type=int, required=True, help="master sampling seed")
    g.add_argument("--method", choices=METHODS, default="dual-averaging")
    g.add_argument("--eta-scale", type=_number_or("sigma_over_R"), default=None,
                   help="damping scale (number or sigma_over_R); required without --config")
    g.add_argument("--eta-t0", type=_number_or("delay"), default=0)
    g.add_argument("--eta-exponent", type=float, default=0.5)
    g.add_argument("--L", type=_number_or("auto"), default="auto")
    g.add_argument("--batch-scaling", default="none", choices=("none", "sqrt-m", "sqrt-n"))
    g.add_argument("--m", type=int, default=1)
    g.add_argument("--C", type=float, default=1.0)
    h = g.add_mutually_exclusive_group()
    h.add_argument("--iterations", type=int, default=None)
    h.add_argument("--wall-time", type=float, default=None)
    g.add_argument("--epsilon", type=float, default=0.05)
    g.add_argument("--replicates", type=int, default=10)
    g.add_argument("--checkpoints", type=int, default=50)
    g.add_argument("--out", default=None, help="output directory")
    g.add_argument("--overlay", action="store_true", help="add a bound_overlay column")


def _objective_spec(a) -> ObjectiveSpec:
    return ObjectiveSpec(kind=a.kind, N=a.N, d=a.d, noise=a.noise, seed=a.data_seed, radius=a.radius,
                         active=a.active, spectrum=a.spectrum, path=a.data)


def _config(a, arch: ArchitectureSpec) -> ExperimentConfig:
    if a.config:
        cfg = ExperimentConfig.load(a.config)
        return dataclasses.replace(cfg, seed=a.seed, output=a.out or cfg.output)
    if a.eta_scale is None:
        raise ConfigError("--eta-scale is required (a number or sigma_over_R)")
    if a.iterations is None and a.wall_time is None:
        raise ConfigError("give --iterations or --wall-time")
    sched = ScheduleSpec(scale=a.eta_scale, t0=a.eta_t0, exponent=a.eta_exponent, L=a.L,
                         batch_scaling=a.batch_scaling)
    return ExperimentConfig(objective=_objective_spec(a), schedule=sched, seed=a.seed, method=a.method,
                            architecture=arch, iterations=a.iterations, wall_time=a.wall_time,
                            epsilon=a.epsilon, replicates=a.replicates, checkpoints=a.checkpoints,
                            output=a.out)


def _report(rec, a) -> None:
    if a.overlay:
        bounds_overlay(rec)
        rec.summary["bound_overlay"] = {"name": rec.bound_name, "coverage": overlay_coverage(rec)}
    if rec.config.output:
        rec.write(rec.config.output)
    s = rec.summary
    out = {k: s[k] for k in ("config_hash", "architecture", "iterations", "f_star", "final_gap_median",
                             "time_to_epsilon", "speedup_vs_centralized") if k in s}
    out["time_to_epsilon"] = {k: v for k, v in s["time_to_epsilon"].items() if k != "per_replicate"}
    print(json.dumps(_jsonable(out), indent=2, sort_keys=True))


def cmd_gen_data(a) -> int:
    obj = make_synthetic(a.kind, a.N, a.d, a.noise, a.seed, radius=a.radius, active=a.active,
                         spectrum=a.spectrum)
    save_csv(obj, a.out)
    print(f"wrote {obj.N} rows x {obj.dim} features to {a.out}")
    return 0


def cmd_solve(a) -> int:
    if a.data:
        obj = load_csv(a.data, kind=a.kind)
    else:
        obj = make_synthetic(a.kind, a.N, a.d, a.noise, a.data_seed, radius=a.radius, active=a.active,
                             spectrum=a.spectrum)
    x, f = reference_optimum(obj)
    c = estimate_constants(obj, trials=a.trials, seed=a.probe_seed)
    print(json.dumps(_jsonable({"f_star": f, "x_star": x, "constants": c.as_dict()}), indent=2))
    return 0


def cmd_run(a) -> int:
    arch = ArchitectureSpec(kind="serial", tau=a.tau, m=a.m, C=a.C)
    _report(run_experiment(_config(a, arch), write=False), a)
    return 0


def cmd_cyclic(a) -> int:
    arch = ArchitectureSpec(kind="cyclic", n=a.n, m=a.m, C=a.C)
    _report(run_experiment(_config(a, arch), write=False), a)
    return 0


def cmd_tree(a) -> int:
    arch = ArchitectureSpec(kind="tree", topology=a.topology, m=a.m, C=a.C, weighting=a.weighting,
                            include_master=not a.exclude_master)
    _report(run_experiment(_config(a, arch), write=False), a)
    return 0


def cmd_sweep(a) -> int:
    arch = ArchitectureSpec(kind="cyclic", n=1, m=a.m, C=a.C)
    cfg = dataclasses.replace(_config(a, arch), compare_centralized=False)
    n_list = [int(v) for v in a.n_list.split(",")]
    text = sweep_csv(speedup_sweep(cfg, n_list, a.m_rule, workers=a.workers))
    if a.out:
        Path(a.out).write_text(text, newline="")
    sys.stdout.write(text)
    return 0


def cmd_bounds(a) -> int:
    fields = {f.name for f in dataclasses.fields(bnd.BoundInputs)}
    kwargs = {k: getattr(a, k) for k in fields if getattr(a, k, None) is not None}
    value = bnd.evaluate(a.name, bnd.BoundInputs(**kwargs))
    print(json.dumps(_jsonable({"bound": a.name, "value": value})))
    return 0


def cmd_verify(a) -> int:
    names = a.only.split(",") if a.only else list(SUITES)
    ok = True
    for i, name in enumerate(names):
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
        res = SUITES[name](instances=a.instances, seed=a.seed + i)
        print(res.line())
        ok &= res.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delayopt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV plus a JSON sidecar")
    g.add_argument("--kind", choices=KINDS, default="logistic")
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--radius", type=float, default=None)
    g.add_argument("--active", type=int, default=None)
    g.add_argument("--spectrum", type=float, default=1.0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("solve", help="reference optimum and estimated constants")
    _add_objective(s)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--probe-seed", type=int, default=0)
    s.set_defaults(fn=cmd_solve)

    r = sub.add_parser("run", help="serial run with a fixed delay")
    _add_run(r)
    r.add_argument("--tau", type=int, default=0)
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("simulate-cyclic", help="cyclic master/worker simulation")
    _add_run(c)
    c.add_argument("--n", type=int, default=1)
    c.set_defaults(fn=cmd_cyclic)

    t = sub.add_parser("simulate-tree", help="locally averaged tree simulation")
    _add_run(t)
    t.add_argument("--topology", required=True, help="JSON file or star:n, path:n, balanced:n")
    t.add_argument("--weighting", choices=("subtree", "naive"), default="subtree")
    t.add_argument("--exclude-master", action="store_true")
    t.set_defaults(fn=cmd_tree)

    w = sub.add_parser("sweep-speedup", help="time-to-epsilon and speedup versus n (cyclic)")
    _add_run(w)
    w.add_argument("--n-list", default="1,2,4,8,16")
    w.add_argument("--m-rule", choices=("m=n", "m=Cn", "fixed"), default="m=n")
    w.add_argument("--workers", type=int, default=1, help="threads for sweep cells")
    w.set_defaults(fn=cmd_sweep)

    b = sub.add_parser("bounds", help="evaluate a convergence bound")
    bsub = b.add_subparsers(dest="action", required=True)
    e = bsub.add_parser("eval")
    names = sorted(bnd.EVALUATORS) + ["regime-cyclic", "rate-centralized", "rate-cyclic", "rate-local"]
    e.add_argument("name", choices=names)
    for f in dataclasses.fields(bnd.BoundInputs):
        e.add_argument(f"--{f.name}", type=int if f.type == "int" else float, default=None)
    e.set_defaults(fn=cmd_bounds)

    v = sub.add_parser("verify", help="run the randomised inequality suites")
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--instances", type=int, default=10_000)
    v.add_argument("--only", default=None, help="comma-separated suite names")
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
