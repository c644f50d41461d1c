import csv
import json

import numpy as np
import pytest

from taskmix.envs import sample_task_sequence
from taskmix.errors import ConfigError
from taskmix.harness import (
    EPISODES_HEADER,
    RunConfig,
    fmt,
    read_episodes,
    run_lifelong,
    summarize,
)

TINY = dict(
    domain="navigation2d",
    tasks=2,
    episodes_per_task=2,
    hidden_width=8,
    buffer_capacity=256,
    batch_size=16,
)


def run(tmp_path, name, **kw):
    merged = {**TINY, **kw}
    cfg = RunConfig(output_dir=str(tmp_path / name), **merged)
    summary = run_lifelong(cfg)
    return cfg, summary


class TestConfig:
    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError, match="unknown method"):
            RunConfig(method="sarsa").validate()

    def test_robust_requires_prior(self):
        with pytest.raises(ConfigError, match="prior_path"):
            RunConfig(method="robust").validate()
        with pytest.raises(ConfigError, match="prior_path"):
            RunConfig(method="dpmm_robust").validate()

    def test_gamma_range(self):
        with pytest.raises(ConfigError, match="gamma"):
            RunConfig(method="finetune", gamma=1.0).validate()

    def test_bad_structure_string(self):
        with pytest.raises(ConfigError):
            RunConfig(method="finetune", task_structure="rings:3").validate()

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_dict({"method": "finetune", "learning_rate": 0.1})

    def test_round_trip_dict(self):
        cfg = RunConfig(method="finetune", tasks=3)
        again = RunConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_float_formatting_nine_significant_digits(self):
        assert fmt(-0.123456789123) == "-0.123456789"
        assert fmt(3) == "3"
        assert fmt(True) == "True"


class TestSingleModelRuns:
    def test_fromscratch_row_bookkeeping(self, tmp_path):
        cfg, summary = run(tmp_path, "fs", method="fromscratch", tasks=3, episodes_per_task=1)
        rows = read_episodes(tmp_path / "fs" / "episodes.csv")
        assert len(rows) == 3
        assert [r["task"] for r in rows] == [1, 2, 3]
        assert all(r["component"] == 0 and r["L"] == 1 for r in rows)
        assert summary["episodes"] == 3

    def test_finetune_outputs_complete(self, tmp_path):
        cfg, summary = run(tmp_path, "ft", method="finetune")
        out = tmp_path / "ft"
        for fname in ("episodes.csv", "tasks.json", "summary.json", "plotdata.csv", "config.json"):
            assert (out / fname).exists()
        assert not (out / "clusters.csv").exists()
        header = open(out / "episodes.csv").readline().strip().split(",")
        assert header == EPISODES_HEADER

    def test_reservoir_runs_and_counts(self, tmp_path):
        cfg, summary = run(tmp_path, "rv", method="reservoir")
        rows = read_episodes(tmp_path / "rv" / "episodes.csv")
        assert len(rows) == cfg.tasks * cfg.episodes_per_task

    def test_robust_reads_prior(self, tmp_path, nav_prior_dir):
        cfg, summary = run(
            tmp_path, "rb", method="robust", prior_path=str(nav_prior_dir), hidden_width=64
        )
        assert summary["status"] == "ok"

    def test_episode_rows_have_nine_digit_returns(self, tmp_path):
        run(tmp_path, "fmt", method="finetune", tasks=1, episodes_per_task=1)
        with open(tmp_path / "fmt" / "episodes.csv") as f:
            next(f)
            row = next(csv.reader(f))
        float(row[2])
        assert len(row) == 7


class TestMixtureRuns:
    def test_dpmm_outputs_and_invariants(self, tmp_path):
        cfg, summary = run(tmp_path, "dp", method="dpmm", tasks=3, episodes_per_task=2)
        out = tmp_path / "dp"
        rows = read_episodes(out / "episodes.csv")
        assert len(rows) == 6
        last_L = 0
        for r in rows:
            assert 1 <= r["component"] <= r["L"]
            assert r["L"] >= last_L
            last_L = r["L"]
        with open(out / "clusters.csv") as f:
            crows = list(csv.DictReader(f))
        assert len(crows) == 3
        assert (out / "mixture" / "mixture.json").exists()

    def test_cluster_rows_goal_columns_match_tasks(self, tmp_path):
        cfg, _ = run(tmp_path, "dg", method="dpmm", tasks=2, episodes_per_task=1)
        tasks = json.load(open(tmp_path / "dg" / "tasks.json"))
        with open(tmp_path / "dg" / "clusters.csv") as f:
            crows = list(csv.DictReader(f))
        for row, goal in zip(crows, tasks["tasks"]):
            assert float(row["goal_0"]) == pytest.approx(goal[0], rel=1e-8)
            assert float(row["goal_1"]) == pytest.approx(goal[1], rel=1e-8)

    def test_mass_invariant_after_run(self, tmp_path):
        from taskmix.mixture import load_mixture

        cfg, _ = run(tmp_path, "dm", method="dpmm", tasks=4, episodes_per_task=1)
        mix = load_mixture(
            tmp_path / "dm" / "mixture",
            dict(action_low=[-0.1, -0.1], action_high=[0.1, 0.1]),
        )
        assert mix.period == 5
        assert mix.total_mass() == pytest.approx(4.0, abs=1e-9)


class TestReduction:
    def test_single_cluster_dpmm_reproduces_finetune_bitwise(self, tmp_path):
        # the master reduction oracle at miniature scale
        common = dict(
            tasks=2, episodes_per_task=3, seed=11, optimizer="sgd",
            em_max_iters=1, hidden_width=8, batch_size=16, buffer_capacity=256,
        )
        cfg_a, _ = run(tmp_path, "ft", method="finetune", **common)
        cfg_b, _ = run(tmp_path, "dp1", method="dpmm", disable_spawn=True, **common)

        rows_a = read_episodes(tmp_path / "ft" / "episodes.csv")
        rows_b = read_episodes(tmp_path / "dp1" / "episodes.csv")
        assert [r["ret"] for r in rows_a] == [r["ret"] for r in rows_b]
        assert [r["steps"] for r in rows_a] == [r["steps"] for r in rows_b]

        from taskmix.mixture import load_mixture

        mix = load_mixture(
            tmp_path / "dp1" / "mixture",
            dict(action_low=[-0.1, -0.1], action_high=[0.1, 0.1], optimizer="sgd"),
        )
        assert mix.num_components == 1


class TestTaskReplay:
    def test_methods_share_saved_sequence_byte_identically(self, tmp_path):
        seq = sample_task_sequence("navigation2d", 2, 123)
        tasks_file = tmp_path / "tasks.json"
        seq.save(tasks_file)
        run(tmp_path, "a", method="finetune", task_structure=f"file:{tasks_file}")
        run(tmp_path, "b", method="fromscratch", task_structure=f"file:{tasks_file}")
        a = (tmp_path / "a" / "tasks.json").read_bytes()
        b = (tmp_path / "b" / "tasks.json").read_bytes()
        assert a == b

    def test_task_file_domain_mismatch_rejected(self, tmp_path):
        seq = sample_task_sequence("velocitytracker", 2, 1)
        tasks_file = tmp_path / "tasks.json"
        seq.save(tasks_file)
        with pytest.raises(ConfigError, match="domain"):
            run(tmp_path, "x", method="finetune", task_structure=f"file:{tasks_file}")

    def test_task_file_too_short_rejected(self, tmp_path):
        seq = sample_task_sequence("navigation2d", 1, 1)
        tasks_file = tmp_path / "tasks.json"
        seq.save(tasks_file)
        with pytest.raises(ConfigError, match="holds 1"):
            run(tmp_path, "y", method="finetune", tasks=5, task_structure=f"file:{tasks_file}")


class TestSummarize:
    def _write_episodes(self, path, rows):
        with open(path / "episodes.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(EPISODES_HEADER)
            for r in rows:
                w.writerow([fmt(v) for v in r])

    def test_constant_returns_zero_standard_error(self, tmp_path):
        self._write_episodes(tmp_path, [[1, j, -2.5, 10, 0, 1, False] for j in range(1, 4)])
        s = summarize(tmp_path)
        assert s["mean_return"] == pytest.approx(-2.5)
        assert s["standard_error"] == 0.0
        assert s["per_task_means"] == [pytest.approx(-2.5)]

    def test_two_task_standard_error(self, tmp_path):
        rows = [[1, 1, 0.0, 1, 0, 1, False], [2, 1, 2.0, 1, 0, 1, False]]
        self._write_episodes(tmp_path, rows)
        s = summarize(tmp_path)
        assert s["mean_return"] == pytest.approx(1.0)
        assert s["standard_error"] == pytest.approx(1.0)

    def test_bootstrap_collapses_for_constant_data(self, tmp_path):
        self._write_episodes(tmp_path, [[t, j, -1.0, 5, 0, 1, False] for t in (1, 2) for j in (1, 2)])
        summarize(tmp_path)
        with open(tmp_path / "plotdata.csv") as f:
            rows = list(csv.DictReader(f))
        for r in rows:
            assert float(r["mean_return"]) == pytest.approx(-1.0)
            assert float(r["ci_low"]) == pytest.approx(-1.0)
            assert float(r["ci_high"]) == pytest.approx(-1.0)

    def test_summary_contains_published_reference_block(self, tmp_path):
        self._write_episodes(tmp_path, [[1, 1, 0.5, 1, 0, 1, False]])
        s = summarize(tmp_path)
        assert "published_reference" in s
        assert s["published_reference"]["ablation_navigation"]["dpmm_robust"] == -1.23

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="episodes.csv"):
            summarize(tmp_path)

    def test_deterministic_bootstrap(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [[t, j, float(rng.normal()), 3, 0, 1, False] for t in range(1, 5) for j in range(1, 6)]
        self._write_episodes(tmp_path, rows)
        summarize(tmp_path)
        first = (tmp_path / "plotdata.csv").read_bytes()
        summarize(tmp_path)
        assert (tmp_path / "plotdata.csv").read_bytes() == first
