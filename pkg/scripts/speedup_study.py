"""Desk-scale speedup study: time to epsilon versus the number of cyclic workers.

    python3 scripts/speedup_study.py --out results/speedup.csv
"""
import argparse
import sys
import time
from pathlib import Path

from delayopt.experiment import (ArchitectureSpec, ExperimentConfig, ObjectiveSpec, ScheduleSpec, speedup_sweep,
                                 sweep_csv)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-list", default="1,2,4,8,16")
    p.add_argument("--m-rule", choices=("m=n", "m=Cn", "fixed"), default="m=n")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--iterations", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    a = p.parse_args(argv)

    cfg = ExperimentConfig(
        objective=ObjectiveSpec(kind="logistic", N=a.N, d=a.d, noise=0.1, seed=1, radius=5.0, active=5),
        schedule=ScheduleSpec(scale="sigma_over_R", batch_scaling="sqrt-n"),
        seed=a.seed, architecture=ArchitectureSpec(kind="cyclic", C=a.C), iterations=a.iterations,
        epsilon=a.epsilon, replicates=a.replicates, trials=200, compare_centralized=False)
    start = time.perf_counter()
    rows = speedup_sweep(cfg, [int(v) for v in a.n_list.split(",")], a.m_rule, workers=a.workers)
    text = sweep_csv(rows)
    if a.out:
        Path(a.out).parent.mkdir(parents=True, exist_ok=True)
        Path(a.out).write_text(text, newline="")
    sys.stdout.write(text)
    print(f"# config {cfg.config_hash()}, {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
