import json

import pytest

from taskmix.cli import EXIT_CONFIG, EXIT_OK, main
from taskmix.harness import read_episodes


def run_cli(*argv):
    return main(list(argv))


class TestTaskgen:
    def test_writes_task_file(self, tmp_path, capsys):
        out = tmp_path / "tasks.json"
        code = run_cli("taskgen", "--domain", "navigation2d", "--tasks", "4", "--seed", "7",
                       "--structure", "kclusters:2:0.1", "--out", str(out))
        assert code == EXIT_OK
        payload = json.loads(out.read_text())
        assert len(payload["tasks"]) == 4
        assert "wrote 4 tasks" in capsys.readouterr().out

    def test_bad_structure_exit_code(self, tmp_path):
        code = run_cli("taskgen", "--structure", "blob", "--out", str(tmp_path / "t.json"))
        assert code == EXIT_CONFIG


class TestRun:
    def test_run_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            "run", "--method", "finetune", "--tasks", "1", "--episodes", "2", "--seed", "0",
            "--hidden-width", "8", "--batch-size", "16", "--buffer-capacity", "256",
            "--out", str(out), "--quiet",
        )
        assert code == EXIT_OK
        rows = read_episodes(out / "episodes.csv")
        assert len(rows) == 2
        assert "run complete" in capsys.readouterr().out

    def test_config_file_with_flag_overrides(self, tmp_path):
        cfg = {
            "method": "fromscratch", "tasks": 2, "episodes_per_task": 1, "seed": 3,
            "hidden_width": 8, "batch_size": 16, "buffer_capacity": 256,
            "out_dir": str(tmp_path / "from_file"),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "override"
        code = run_cli("run", "--config", str(cfg_path), "--tasks", "1", "--out", str(out), "--quiet")
        assert code == EXIT_OK
        saved = json.loads((out / "config.json").read_text())
        assert saved["tasks"] == 1
        assert saved["method"] == "fromscratch"
        assert not (tmp_path / "from_file").exists()

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"methd": "finetune"}))
        assert run_cli("run", "--config", str(cfg_path), "--out", str(tmp_path / "o")) == EXIT_CONFIG

    def test_missing_out_rejected(self):
        assert run_cli("run", "--method", "finetune", "--quiet") == EXIT_CONFIG

    def test_method_needing_prior_fails_cleanly(self, tmp_path, capsys):
        code = run_cli("run", "--method", "robust", "--tasks", "1", "--episodes", "1",
                       "--out", str(tmp_path / "r"), "--quiet")
        assert code == EXIT_CONFIG
        assert "prior_path" in capsys.readouterr().err


class TestPretrainAndSummarize:
    def test_full_cycle(self, tmp_path, capsys):
        prior_dir = tmp_path / "prior"
        code = run_cli("pretrain", "--domain", "navigation2d", "--m", "2", "--episodes", "2",
                       "--seed", "1", "--hidden-width", "8", "--out", str(prior_dir), "--quiet")
        assert code == EXIT_OK
        assert (prior_dir / "prior_critic.bin").exists()

        out = tmp_path / "run"
        code = run_cli(
            "run", "--method", "robust", "--tasks", "1", "--episodes", "1", "--seed", "0",
            "--prior", str(prior_dir), "--batch-size", "16", "--buffer-capacity", "256",
            "--out", str(out), "--quiet",
        )
        assert code == EXIT_OK

        capsys.readouterr()
        code = run_cli("summarize", "--in", str(out))
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["method"] == "robust"
        assert summary["episodes"] == 1

    def test_summarize_missing_dir(self, tmp_path):
        assert run_cli("summarize", "--in", str(tmp_path / "none")) == EXIT_CONFIG
