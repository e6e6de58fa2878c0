"""Experiment configuration, orchestration and CSV/JSON output."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bounds import BoundInputs, bound_cor41, bound_cor42, bound_thm1, bound_thm2, nonsmooth_rate
from .core import StepSchedule
from .delay import DelayModel, TimeModel, update_interval
from .optimizer import METHODS, Trajectory, log_checkpoints, reference_optimum, run_serial
from .oracle import KINDS, Objective, ProblemConstants, estimate_constants, load_csv, make_synthetic
from .simulate import TreeTopology, simulate_cyclic, simulate_tree

ARCH_KINDS = ("serial", "cyclic", "tree")
BATCH_SCALING = ("none", "sqrt-m", "sqrt-n")
M_RULES = ("m=n", "m=Cn", "fixed")


class ConfigError(ValueError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "logistic"
    N: int = 1000
    d: int = 10
    noise: float = 0.0
    seed: int = 0
    radius: float | None = None
    active: int | None = None
    spectrum: float = 1.0
    path: str | None = None          # load a CSV dataset instead of generating one

    def validate(self) -> None:
        _require(self.kind in KINDS, f"objective.kind must be one of {KINDS}")
        _require(self.N >= 1 and self.d >= 1, "objective.N and objective.d must be positive")
        _require(self.noise >= 0, "objective.noise must be nonnegative")
        _require(self.radius is None or self.radius > 0, "objective.radius must be positive or null")
        _require(self.spectrum >= 1, "objective.spectrum must be at least 1")

    def build(self) -> Objective:
        if self.path is not None:
            return load_csv(self.path, kind=self.kind)
        return make_synthetic(self.kind, self.N, self.d, self.noise, self.seed,
                              radius=self.radius, active=self.active, spectrum=self.spectrum)


@dataclass(frozen=True)
class ScheduleSpec:
    """eta(t) = scale * (t + t0)**exponent, alpha(t) = 1 / (L + eta(t)).

    ``scale`` is required: a number or ``"sigma_over_R"`` (estimated sigma / R).
    ``t0`` may be ``"delay"``: the delay of the architecture (tau, n, or
    twice the tree height). ``L="auto"`` uses the estimated smoothness
    (0 for the nonsmooth LAD loss). ``batch_scaling`` divides the scale by
    sqrt(m) or sqrt(n).
    """

    scale: float | str
    t0: int | str = 0
    exponent: float = 0.5
    L: float | str = "auto"
    batch_scaling: str = "none"

    def validate(self) -> None:
        _require(self.scale == "sigma_over_R" or (isinstance(self.scale, (int, float)) and self.scale > 0),
                 "schedule.scale must be a positive number or 'sigma_over_R'")
        _require(self.t0 == "delay" or (isinstance(self.t0, int) and self.t0 >= 0),
                 "schedule.t0 must be a nonnegative integer or 'delay'")
        _require(0 <= self.exponent <= 1, "schedule.exponent must lie in [0, 1]")
        _require(self.L == "auto" or (isinstance(self.L, (int, float)) and self.L >= 0),
                 "schedule.L must be 'auto' or a nonnegative number")
        _require(self.batch_scaling in BATCH_SCALING, f"schedule.batch_scaling must be one of {BATCH_SCALING}")


@dataclass(frozen=True)
class ArchitectureSpec:
    """serial (with a fixed or random delay), cyclic(n, m, C) or tree(topology, m, C).

    ``topology`` is a JSON file path or one of ``star:n``, ``path:n``,
    ``balanced:n``.
    """

    kind: str = "serial"
    tau: int = 0
    delay_probs: tuple | None = None
    delay_seed: int = 0
    n: int = 1
    m: int = 1
    C: float = 1.0
    topology: str | None = None
    weighting: str = "subtree"
    include_master: bool = True

    def validate(self) -> None:
        _require(self.kind in ARCH_KINDS, f"architecture.kind must be one of {ARCH_KINDS}")
        _require(self.tau >= 0, "architecture.tau must be nonnegative")
        _require(self.n >= 1 and self.m >= 1, "architecture.n and architecture.m must be positive")
        _require(self.C > 0, "architecture.C must be positive")
        _require(self.weighting in ("subtree", "naive"), "architecture.weighting must be 'subtree' or 'naive'")
        if self.kind == "tree":
            _require(self.topology is not None, "tree architecture needs a topology")
        if self.delay_probs is not None:
            _require(self.kind == "serial", "delay_probs only applies to the serial architecture")

    def tree(self) -> TreeTopology:
        spec = self.topology
        for prefix, ctor in (("star:", TreeTopology.star), ("path:", TreeTopology.path),
                             ("balanced:", TreeTopology.balanced)):
            if spec.startswith(prefix):
                return ctor(int(spec[len(prefix):]))
        return TreeTopology.load(spec)

    def delay_model(self) -> DelayModel:
        if self.delay_probs is not None:
            return DelayModel.bounded_random(self.delay_probs, seed=self.delay_seed)
        return DelayModel.fixed(self.tau)

    def workers(self) -> int:
        if self.kind == "cyclic":
            return self.n
        if self.kind == "tree":
            return self.tree().n
        return 1

    def delay(self) -> int:
        if self.kind == "cyclic":
            return self.n - 1
        if self.kind == "tree":
            return 2 * self.tree().height
        return self.delay_model().tau_max

    def interval(self) -> Fraction:
        arch = "centralized" if self.kind == "serial" else self.kind
        return update_interval(TimeModel(C=self.C, m=self.m, n=self.workers()), arch)


@dataclass(frozen=True)
class ExperimentConfig:
    """One fully seeded experiment. Horizon: ``iterations`` master updates
    or ``wall_time`` units (exactly one of them)."""

    objective: ObjectiveSpec
    schedule: ScheduleSpec
    seed: int
    method: str = "dual-averaging"
    architecture: ArchitectureSpec = field(default_factory=ArchitectureSpec)
    iterations: int | None = None
    wall_time: float | None = None
    epsilon: float = 0.05
    replicates: int = 10
    checkpoints: int = 50
    trials: int = 1000
    compare_centralized: bool = True
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.objective.validate()
        self.schedule.validate()
        self.architecture.validate()
        _require(self.method in METHODS, f"method must be one of {METHODS}")
        _require((self.iterations is None) != (self.wall_time is None),
                 "give exactly one of iterations and wall_time")
        _require(self.iterations is None or self.iterations >= 1, "iterations must be positive")
        _require(self.wall_time is None or self.wall_time > 0, "wall_time must be positive")
        _require(self.epsilon > 0, "epsilon must be positive")
        _require(self.replicates >= 1, "replicates must be positive")
        _require(self.checkpoints >= 1 and self.trials >= 1, "checkpoints and trials must be positive")

    def horizon(self) -> int:
        if self.iterations is not None:
            return int(self.iterations)
        return math.floor(Fraction(str(self.wall_time)) / self.architecture.interval())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        d = self.to_dict()
        d.pop("output", None)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = dict(raw)
        sub = {"objective": ObjectiveSpec, "schedule": ScheduleSpec, "architecture": ArchitectureSpec}
        for key, kind in sub.items():
            if key in raw:
                raw[key] = _build(kind, raw[key], key)
        _require("objective" in raw and "schedule" in raw and "seed" in raw,
                 "config needs objective, schedule and seed")
        return _build(cls, raw, "config")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _build(kind, raw, where: str):
    if isinstance(raw, kind):
        return raw
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = sorted(set(raw) - names)
    _require(not unknown, f"unknown field(s) in {where}: {', '.join(unknown)}")
    if kind is ArchitectureSpec and raw.get("delay_probs") is not None:
        raw = dict(raw, delay_probs=tuple(raw["delay_probs"]))
    try:
        return kind(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def resolve_schedule(cfg: ExperimentConfig, consts: ProblemConstants, obj: Objective) -> StepSchedule:
    sp, arch = cfg.schedule, cfg.architecture
    if sp.scale == "sigma_over_R":
        _require(consts.sigma > 0 and math.isfinite(consts.R),
                 "sigma_over_R needs a positive sigma and a bounded domain")
        scale = consts.sigma / consts.R
    else:
        scale = float(sp.scale)
    if sp.batch_scaling == "sqrt-m":
        scale /= math.sqrt(arch.m)
    elif sp.batch_scaling == "sqrt-n":
        scale /= math.sqrt(arch.workers())
    t0 = arch.delay() if sp.t0 == "delay" else int(sp.t0)
    if sp.L == "auto":
        L = consts.L if obj.smooth else 0.0
    else:
        L = float(sp.L)
    return StepSchedule(L=L, scale=scale, t0=t0, exponent=sp.exponent,
                        constants={"sigma": consts.sigma, "R": consts.R, "n": arch.workers(),
                                   "T": cfg.horizon(), "C": arch.C, "tau": arch.delay()})


def _simulate(cfg: ExperimentConfig, obj: Objective, sched: StepSchedule, f_star: float,
              stop_at_eps: bool = False) -> Trajectory:
    arch, K = cfg.architecture, cfg.horizon()
    _require(K >= 1, "horizon is shorter than one master update")
    common = dict(replicas=cfg.replicates, f_star=f_star, checkpoints=log_checkpoints(K, cfg.checkpoints),
                  epsilon=cfg.epsilon, stop_at_eps=stop_at_eps)
    if arch.kind == "serial":
        return run_serial(obj, cfg.method, sched, arch.delay_model(), T=K, m=arch.m, seed=cfg.seed, **common)
    if arch.kind == "cyclic":
        return simulate_cyclic(obj, cfg.method, sched, arch.n, arch.m, arch.C, seed=cfg.seed,
                               iterations=K, **common)
    return simulate_tree(obj, cfg.method, sched, arch.tree(), arch.m, arch.C, seed=cfg.seed, iterations=K,
                         weighting=arch.weighting, include_master=arch.include_master, **common)


def centralized_twin(cfg: ExperimentConfig) -> ExperimentConfig:
    """Serial, zero-delay run with the same m, seeds and wall-clock budget."""
    arch = ArchitectureSpec(kind="serial", m=cfg.architecture.m, C=cfg.architecture.C)
    horizon = {"iterations": None, "wall_time": cfg.wall_time}
    if cfg.wall_time is None:
        horizon["wall_time"] = float(cfg.horizon() * cfg.architecture.interval())
    return dataclasses.replace(cfg, architecture=arch, compare_centralized=False, output=None, **horizon)


def _percentile(s: np.ndarray, q: float) -> float:
    # linear interpolation on sorted data, treating censored (inf) entries as larger than all others
    pos = q * (s.size - 1)
    lo, frac = int(math.floor(pos)), pos - math.floor(pos)
    if frac == 0:
        return float(s[lo])
    hi = s[lo + 1]
    return math.inf if not math.isfinite(hi) else float(s[lo] + (hi - s[lo]) * frac)


def summarize_times(times: np.ndarray) -> dict:
    times = np.asarray(times, dtype=float)
    s = np.sort(times)
    q25, med, q75 = (_percentile(s, q) for q in (0.25, 0.5, 0.75))
    iqr = q75 - q25 if math.isfinite(q75) else math.inf
    return {"median": float(med), "q25": float(q25), "q75": float(q75), "iqr": float(iqr),
            "censored": int(np.sum(~np.isfinite(times))), "per_replicate": [float(v) for v in times]}


@dataclass
class RunRecord:
    config: ExperimentConfig
    trajectory: Trajectory
    constants: ProblemConstants
    schedule: StepSchedule
    f_star: float
    summary: dict
    baseline: Trajectory | None = None
    bound: np.ndarray | None = None
    bound_name: str | None = None

    def rows(self) -> list[tuple]:
        base = self.trajectory.rows()
        if self.bound is None:
            return base
        return [r + (float(b),) for r, b in zip(base, self.bound)]

    def header(self) -> list[str]:
        cols = ["t", "wallclock", "f_avg_gap", "f_iter_gap", "delay_applied"]
        return cols + (["bound_overlay"] if self.bound is not None else [])

    def trajectory_csv(self) -> str:
        return _csv(self.header(), self.rows())

    def replicates_csv(self) -> str:
        tr = self.trajectory
        rows = []
        for r in range(tr.replicas):
            rows.extend((r,) + row for row in tr.rows(replicate=r))
        return _csv(["replicate", "t", "wallclock", "f_avg_gap", "f_iter_gap", "delay_applied"], rows)

    def summary_json(self, timestamp: bool = True) -> str:
        out = dict(self.summary)
        if timestamp:
            out["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        return json.dumps(_jsonable(out), indent=2, sort_keys=True)

    def write(self, outdir) -> Path:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "trajectory.csv").write_text(self.trajectory_csv(), newline="")
        (outdir / "replicates.csv").write_text(self.replicates_csv(), newline="")
        (outdir / "summary.json").write_text(self.summary_json())
        return outdir


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return str(v)


def _csv(header: list[str], rows: list[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return "inf" if v == math.inf else "-inf" if v == -math.inf else v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


def prepare(cfg: ExperimentConfig) -> tuple[Objective, ProblemConstants, float]:
    obj = cfg.objective.build()
    consts = estimate_constants(obj, trials=cfg.trials, seed=cfg.seed)
    f_star = reference_optimum(obj)[1]
    return obj, consts, f_star


def run_experiment(cfg: ExperimentConfig, *, prepared=None, write: bool = True) -> RunRecord:
    """Run all replicates, summarise time-to-epsilon and compare with a centralized run.

    Replicas that never reach epsilon within the horizon are censored: their
    time is ``inf``.
    """
    obj, consts, f_star = prepared or prepare(cfg)
    sched = resolve_schedule(cfg, consts, obj)
    traj = _simulate(cfg, obj, sched, f_star)
    times = summarize_times(traj.time_to_eps)
    baseline = None
    speedup = None
    if cfg.compare_centralized:
        twin = centralized_twin(cfg)
        if twin.architecture == cfg.architecture and twin.horizon() == cfg.horizon():
            baseline = traj
        else:
            baseline = _simulate(twin, obj, resolve_schedule(twin, consts, obj), f_star)
        base_med = summarize_times(baseline.time_to_eps)["median"]
        speedup = _ratio(base_med, times["median"])
    post = traj.delays[traj.delays >= 0]
    summary = {
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "constants": consts.as_dict(),
        "f_star": f_star,
        "schedule": {"L": sched.L, "scale": sched.scale, "t0": sched.t0, "exponent": sched.exponent},
        "architecture": cfg.architecture.kind,
        "iterations": traj.steps,
        "interval": traj.interval,
        "epsilon": cfg.epsilon,
        "time_to_epsilon": times,
        "iterations_to_epsilon": summarize_times(traj.iterations_to_eps),
        "speedup_vs_centralized": speedup,
        "final_gap_median": float(np.median(traj.final_gap())),
        "warmup_steps": int(np.sum(traj.delays < 0)),
        "realized_delay_mean": float(post.mean()) if post.size else None,
    }
    if "utilization" in traj.extras:
        summary["utilization"] = traj.extras["utilization"]
    rec = RunRecord(cfg, traj, consts, sched, f_star, summary, baseline)
    if write and cfg.output:
        rec.write(cfg.output)
    return rec


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf if num > 0 else 1.0
    if not math.isfinite(den):
        return 0.0 if math.isfinite(num) else math.nan
    return num / den


def _cell(base: ExperimentConfig, n: int, m_rule: str) -> ExperimentConfig:
    arch = base.architecture
    if m_rule == "m=n":
        m = n
    elif m_rule == "m=Cn":
        m = max(1, math.ceil(arch.C * n))
    else:
        m = arch.m
    new_arch = dataclasses.replace(arch, n=n, m=m)
    if arch.kind == "tree":
        new_arch = dataclasses.replace(new_arch, topology=f"star:{n}")
    return dataclasses.replace(base, architecture=new_arch, compare_centralized=False, output=None)


def speedup_sweep(base: ExperimentConfig, n_list, m_rule: str = "m=n", *, workers: int = 1,
                  prepared=None) -> list[dict]:
    """Median time-to-epsilon per n and speedup over the centralized n=1 run.

    Each cell (and the baseline) stops once every replica has reached
    epsilon. Rows are sorted by n.
    """
    _require(m_rule in M_RULES, f"m_rule must be one of {M_RULES}")
    n_list = sorted({int(n) for n in n_list})
    _require(n_list and n_list[0] >= 1, "n_list must contain positive integers")
    obj, consts, f_star = prepared or prepare(base)
    baseline_cfg = centralized_twin(_cell(base, 1, m_rule))

    def run(cfg):
        sched = resolve_schedule(cfg, consts, obj)
        return summarize_times(_simulate(cfg, obj, sched, f_star, stop_at_eps=True).time_to_eps)

    cells = [baseline_cfg] + [_cell(base, n, m_rule) for n in n_list]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run, cells))
    base_time = results[0]["median"]
    rows = []
    for n, res in zip(n_list, results[1:]):
        rows.append({"n": n, "median_time": res["median"], "iqr": res["iqr"],
                     "speedup": _ratio(base_time, res["median"])})
    return rows


def sweep_csv(rows: list[dict]) -> str:
    return _csv(["n", "median_time", "iqr", "speedup"],
                [(r["n"], r["median_time"], r["iqr"], r["speedup"]) for r in rows])


def overlay_inputs(rec: RunRecord) -> BoundInputs:
    c, s, arch = rec.constants, rec.schedule, rec.config.architecture
    sigma = c.sigma / math.sqrt(arch.m)
    tree_stats = {}
    if arch.kind == "tree":
        tree = arch.tree()
        lam = tree.weights(arch.include_master)
        delays = tree.delays.astype(float)
        tree_stats = dict(tau_bar=float(lam @ delays), tau_sq_bar=float(lam @ delays ** 2), D=float(tree.height))
    delay = float(arch.delay())
    if arch.kind == "cyclic" and rec.summary.get("realized_delay_mean") is not None:
        # the pipeline's effective delay depends on m, n and C; use what the run saw
        delay = float(rec.summary["realized_delay_mean"])
    return BoundInputs(G=c.G, L=c.L if math.isfinite(c.L) else 0.0, sigma=sigma,
                       R=c.R if math.isfinite(c.R) else 0.0, T=1, n=arch.workers(), m=arch.m,
                       tau=delay, B=delay, eta_scale=s.scale, eta_t0=s.t0, eta_exponent=s.exponent,
                       C=arch.C, **tree_stats)


def default_bound(rec: RunRecord) -> str:
    arch = rec.config.architecture
    if not math.isfinite(rec.constants.L):
        return "nonsmooth"
    if arch.kind == "tree":
        return "cor42"
    if arch.kind == "cyclic":
        return "cor41"
    return "thm1" if rec.config.method == "dual-averaging" else "thm2"


def bounds_overlay(rec: RunRecord, inputs: BoundInputs | None = None, name: str | None = None) -> RunRecord:
    """Attach a bound value to every checkpoint of ``rec`` (in place)."""
    inputs = inputs or overlay_inputs(rec)
    name = name or default_bound(rec)
    fns = {"thm1": bound_thm1, "thm2": bound_thm2, "cor41": bound_cor41, "cor42": bound_cor42,
           "nonsmooth": lambda i: nonsmooth_rate(dataclasses.replace(i, B=i.B + 1))}
    _require(name in fns, f"unknown overlay bound {name!r}")
    fn = fns[name]
    rec.bound = np.array([fn(inputs.with_T(int(t))) for t in rec.trajectory.t])
    rec.bound_name = name
    return rec


def overlay_coverage(rec: RunRecord) -> float:
    """Fraction of post-warm-up checkpoints (all replicas) where the gap is within the bound."""
    _require(rec.bound is not None, "no bound overlay attached")
    keep = ~rec.trajectory.warmup
    gaps = rec.trajectory.f_avg_gap[:, keep]
    return float(np.mean(gaps <= rec.bound[keep][None, :]))
