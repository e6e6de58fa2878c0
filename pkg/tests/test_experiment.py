import dataclasses
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from delayopt.experiment import (ArchitectureSpec, ConfigError, ExperimentConfig, ObjectiveSpec, ScheduleSpec,
                                 bounds_overlay, centralized_twin, overlay_coverage, overlay_inputs, prepare,
                                 run_experiment, speedup_sweep, summarize_times, sweep_csv)

OBJ = ObjectiveSpec(kind="logistic", N=400, d=10, noise=0.1, seed=1, radius=3.0, active=4)
SCHED = ScheduleSpec(scale=1.0, t0="delay")


def config(**kw):
    base = dict(objective=OBJ, schedule=SCHED, seed=3, iterations=300, replicates=3, epsilon=0.05,
                checkpoints=20, trials=200)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def prepared():
    return prepare(config())


class TestRunExperiment:
    def test_epsilon_above_initial_gap(self, prepared):
        rec = run_experiment(config(epsilon=1e6), prepared=prepared, write=False)
        assert rec.summary["time_to_epsilon"]["median"] == 0.0
        assert rec.summary["time_to_epsilon"]["censored"] == 0

    def test_two_replicates_distinct(self, prepared):
        rec = run_experiment(config(replicates=2), prepared=prepared, write=False)
        gaps = rec.trajectory.f_avg_gap
        assert gaps.shape[0] == 2 and not np.array_equal(gaps[0], gaps[1])
        assert len(rec.summary["time_to_epsilon"]["per_replicate"]) == 2

    def test_single_worker_cyclic_speedup_is_one(self, prepared):
        cfg = config(architecture=ArchitectureSpec(kind="cyclic", n=1, m=2), epsilon=0.2)
        rec = run_experiment(cfg, prepared=prepared, write=False)
        assert math.isfinite(rec.summary["time_to_epsilon"]["median"])
        assert rec.summary["speedup_vs_centralized"] == 1.0

    def test_censoring(self, prepared):
        rec = run_experiment(config(epsilon=1e-9, iterations=50), prepared=prepared, write=False)
        t = rec.summary["time_to_epsilon"]
        assert t["median"] == math.inf and t["censored"] == 3
        assert json.loads(rec.summary_json())["time_to_epsilon"]["median"] == "inf"

    @pytest.mark.parametrize("arch", [ArchitectureSpec(kind="cyclic", n=3, m=2, C=1.0),
                                      ArchitectureSpec(kind="tree", topology="star:4", m=3),
                                      ArchitectureSpec(kind="serial", m=5, tau=2)])
    def test_accounting_identity(self, prepared, arch):
        rec = run_experiment(config(architecture=arch, wall_time=120.0, iterations=None), prepared=prepared,
                             write=False)
        tr = rec.trajectory
        interval = arch.interval()
        assert tr.steps == math.floor(Fraction(120) / interval)
        expect = [float(Fraction(int(t)) * interval) for t in tr.t]
        assert tr.wallclock.tolist() == expect
        assert np.all(np.diff(tr.wallclock) > 0)
        assert np.all(np.isfinite(tr.f_avg_gap))

    def test_byte_identical_outputs(self, tmp_path, prepared):
        a = run_experiment(config(output=str(tmp_path / "a")), prepared=prepared)
        b = run_experiment(config(output=str(tmp_path / "b")), prepared=prepared)
        for name in ("trajectory.csv", "replicates.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        sa, sb = (json.loads(r.summary_json(timestamp=False)) for r in (a, b))
        sa["config"].pop("output"), sb["config"].pop("output")
        assert sa == sb
        raw = (tmp_path / "a" / "trajectory.csv").read_bytes()
        assert raw.startswith(b"t,wallclock,f_avg_gap,f_iter_gap,delay_applied\r\n")
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert summary["config_hash"] == a.config.config_hash() and "timestamp" in summary

    def test_centralized_twin(self):
        cfg = config(architecture=ArchitectureSpec(kind="cyclic", n=4, m=8, C=1.0), iterations=100)
        twin = centralized_twin(cfg)
        assert twin.architecture.kind == "serial" and twin.architecture.m == 8
        assert twin.horizon() == 100 * 2 // 8

    def test_overlay(self, prepared):
        rec = run_experiment(config(iterations=400), prepared=prepared, write=False)
        bounds_overlay(rec)
        assert rec.bound_name == "thm1" and rec.bound.shape == rec.trajectory.t.shape
        assert rec.bound[-1] < rec.bound[0]
        assert rec.trajectory_csv().splitlines()[0].endswith(",bound_overlay")
        assert 0.0 <= overlay_coverage(rec) <= 1.0


class TestSweep:
    def test_single_cell(self, prepared):
        cfg = config(architecture=ArchitectureSpec(kind="cyclic"), epsilon=0.2)
        rows = speedup_sweep(cfg, [1], prepared=prepared)
        assert len(rows) == 1 and rows[0]["n"] == 1 and rows[0]["speedup"] == 1.0

    def test_three_point_rerun_oracle(self, prepared):
        cfg = config(architecture=ArchitectureSpec(kind="cyclic"), epsilon=0.2, iterations=600)
        rows = speedup_sweep(cfg, [4, 1, 2], prepared=prepared, workers=2)
        assert [r["n"] for r in rows] == [1, 2, 4]
        for r in rows:
            again = speedup_sweep(cfg, [r["n"]], prepared=prepared)[0]
            assert again == r
        text = sweep_csv(rows)
        assert text.splitlines()[0] == "n,median_time,iqr,speedup"

    def test_bad_rule(self, prepared):
        with pytest.raises(ConfigError):
            speedup_sweep(config(), [1, 2], m_rule="m=2n", prepared=prepared)


class TestConfig:
    def test_summarize_times(self):
        s = summarize_times(np.array([4.0, 2.0, math.inf, 1.0, 3.0]))
        assert s["median"] == 3.0 and s["q25"] == 2.0 and s["q75"] == 4.0 and s["censored"] == 1
        s = summarize_times(np.array([1.0, 2.0, math.inf, math.inf]))
        assert s["median"] == math.inf and s["q25"] == 1.75 and s["iqr"] == math.inf

    def test_summarize_matches_numpy_when_finite(self, rng):
        t = rng.exponential(size=11)
        s = summarize_times(t)
        assert [s["q25"], s["median"], s["q75"]] == pytest.approx(np.percentile(t, [25, 50, 75]), rel=1e-14)

    @pytest.mark.parametrize("kw", [dict(iterations=None), dict(wall_time=10.0), dict(epsilon=0),
                                    dict(method="adam"), dict(replicates=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            config(**kw)

    @pytest.mark.parametrize("spec", [lambda: ScheduleSpec(scale=-1), lambda: ScheduleSpec(scale="big"),
                                      lambda: ObjectiveSpec(kind="hinge"),
                                      lambda: ArchitectureSpec(kind="tree"),
                                      lambda: ArchitectureSpec(kind="cyclic", delay_probs=(0.5, 0.5))])
    def test_invalid_parts(self, spec):
        obj = spec()
        with pytest.raises(ConfigError):
            obj.validate()

    def test_unknown_field(self):
        raw = json.loads(config().canonical_json())
        raw["objective"]["dims"] = 3
        with pytest.raises(ConfigError, match="dims"):
            ExperimentConfig.from_dict(raw)

    def test_missing_section(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"objective": {}, "seed": 1})

    def test_json_round_trip_and_hash(self, tmp_path):
        cfg = config(architecture=ArchitectureSpec(kind="serial", delay_probs=(0.5, 0.5)))
        path = tmp_path / "cfg.json"
        path.write_text(cfg.canonical_json())
        back = ExperimentConfig.load(path)
        assert back == cfg and back.config_hash() == cfg.config_hash()
        assert dataclasses.replace(cfg, output="elsewhere").config_hash() == cfg.config_hash()
        assert dataclasses.replace(cfg, seed=4).config_hash() != cfg.config_hash()

    def test_horizon_short(self, prepared):
        cfg = config(iterations=None, wall_time=0.5, architecture=ArchitectureSpec(m=2))
        with pytest.raises(ConfigError):
            run_experiment(cfg, prepared=prepared, write=False)


def test_overlay_uses_realized_cyclic_delay(prepared):
    cfg = config(architecture=ArchitectureSpec(kind="cyclic", n=4, m=4), iterations=200)
    rec = run_experiment(cfg, prepared=prepared, write=False)
    assert np.all(rec.trajectory.delays[4:] == 3)
    inp = overlay_inputs(rec)
    assert inp.tau == rec.summary["realized_delay_mean"] and 2.9 < inp.tau < 3.0 and inp.n == 4
