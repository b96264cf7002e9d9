"""End-to-end tests for the command-line interface."""

import json
import os

import numpy as np
import pytest

from decorrgnn.cli import CliError, load_config, main, sha256_file

TINY_CONFIG = """\
# tiny run for tests
variant = stable_gcn
epochs = 2
warmup_epochs = 1
batch_size = 8
hidden = 8
n_clusters = 3
decor_epochs = 3
weight_lr = 0.5
seed = 0
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.txt"
    cfg.write_text(TINY_CONFIG)
    for name, mu, n, seed in (("train", 0.9, 16, 1), ("val", 0.5, 12, 2),
                              ("test", 0.25, 12, 3)):
        rc = main(["gen", "--mu", str(mu), "--n", str(n), "--seed", str(seed),
                   "--out", str(root / f"{name}.jsonl"), "--split", name])
        assert rc == 0
    return root


class TestLoadConfig:
    def test_parses_all_keys(self, workspace):
        cfg = load_config(workspace / "config.txt")
        assert cfg.variant == "stable_gcn"
        assert cfg.epochs == 2 and cfg.warmup_epochs == 1
        assert cfg.n_clusters == 3
        assert cfg.decor.decor_epochs == 3
        assert cfg.decor.weight_lr == 0.5

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("variant = stable_gcn\nmomentum = 0.9\n")
        with pytest.raises(CliError, match="momentum"):
            load_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("epochs = banana\n")
        with pytest.raises(CliError, match="epochs"):
            load_config(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("just some text\n")
        with pytest.raises(CliError, match="key = value"):
            load_config(path)

    def test_env_override(self, tmp_path, monkeypatch):
        path = tmp_path / "c.txt"
        path.write_text("variant = baseline_gcn\nepochs = 2\nwarmup_epochs = 1\n")
        monkeypatch.setenv("DECORRGNN_EPOCHS", "4")
        assert load_config(path).epochs == 4


class TestGen:
    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            rc = main(["gen", "--mu", "0.6", "--n", "10", "--seed", "5",
                       "--out", str(out)])
            assert rc == 0
        assert sha256_file(a) == sha256_file(b)

    def test_mu_out_of_range_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--mu", "1.5", "--n", "10", "--seed", "0",
                  "--out", str(tmp_path / "x.jsonl")])
        assert exc.value.code == 2

    def test_prints_summary(self, tmp_path, capsys):
        main(["gen", "--mu", "0.5", "--n", "10", "--seed", "0",
              "--out", str(tmp_path / "d.jsonl")])
        out = capsys.readouterr().out
        assert "10 graphs" in out
        assert "star co-occurrence" in out


@pytest.fixture(scope="module")
def run_dir(workspace):
    out = workspace / "run_stable"
    rc = main(["train", "--config", str(workspace / "config.txt"),
               "--train", str(workspace / "train.jsonl"),
               "--val", str(workspace / "val.jsonl"),
               "--test", str(workspace / "test.jsonl"),
               "--out", str(out), "--seeds", "0,1"])
    assert rc == 0
    return out


class TestTrain:
    def test_artifacts_present(self, run_dir):
        for name in ("model_seed0.json", "model_seed1.json",
                     "history_seed0.csv", "history_seed1.csv", "manifest.json"):
            assert (run_dir / name).exists()

    def test_history_has_epoch_rows(self, run_dir):
        lines = (run_dir / "history_seed0.csv").read_text().strip().split("\n")
        assert len(lines) == 1 + 2  # header + epochs

    def test_manifest_contents(self, run_dir, workspace):
        doc = json.loads((run_dir / "manifest.json").read_text())
        assert doc["variant"] == "stable_gcn"
        assert doc["seeds"] == [0, 1]
        assert len(doc["per_seed"]) == 2
        # aggregates recomputable from per-seed values
        accs = [r["accuracy"] for r in doc["per_seed"]]
        assert doc["aggregate"]["accuracy"]["mean"] == pytest.approx(np.mean(accs))
        want_se = np.std(accs, ddof=1) / np.sqrt(len(accs))
        assert doc["aggregate"]["accuracy"]["stderr"] == pytest.approx(want_se)
        # dataset hashes match the files on disk
        for name in ("train", "val", "test"):
            entry = doc["datasets"][name]
            assert entry["sha256"] == sha256_file(entry["path"])
        # CVD ran after warmup for the stable variant
        assert doc["decor_steps"] > 0

    def test_baseline_never_runs_cvd(self, workspace):
        cfg = workspace / "baseline.txt"
        cfg.write_text(TINY_CONFIG.replace("stable_gcn", "baseline_gcn"))
        out = workspace / "run_baseline"
        rc = main(["train", "--config", str(cfg),
                   "--train", str(workspace / "train.jsonl"),
                   "--val", str(workspace / "val.jsonl"),
                   "--test", str(workspace / "test.jsonl"),
                   "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "manifest.json").read_text())
        assert doc["decor_steps"] == 0

    def test_rerun_identical_history(self, workspace, run_dir):
        out = workspace / "run_again"
        rc = main(["train", "--config", str(workspace / "config.txt"),
                   "--train", str(workspace / "train.jsonl"),
                   "--val", str(workspace / "val.jsonl"),
                   "--test", str(workspace / "test.jsonl"),
                   "--out", str(out), "--seeds", "0"])
        assert rc == 0
        assert (out / "history_seed0.csv").read_bytes() == \
            (run_dir / "history_seed0.csv").read_bytes()

    def test_missing_dataset_exit_1(self, workspace, capsys):
        rc = main(["train", "--config", str(workspace / "config.txt"),
                   "--train", str(workspace / "nope.jsonl"),
                   "--val", str(workspace / "val.jsonl"),
                   "--test", str(workspace / "test.jsonl"),
                   "--out", str(workspace / "run_x")])
        assert rc == 1
        assert "nope.jsonl" in capsys.readouterr().err


class TestEval:
    def test_metrics_json(self, workspace, capsys):
        run = workspace / "run_stable"
        rc = main(["eval", "--model", str(run / "model_seed0.json"),
                   "--data", str(workspace / "test.jsonl")])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) == {"accuracy", "f1", "auc"}
        for v in doc.values():
            assert v is None or round(v, 4) == v

    def test_missing_model_exit_1(self, workspace, capsys):
        rc = main(["eval", "--model", str(workspace / "absent.json"),
                   "--data", str(workspace / "test.jsonl")])
        assert rc == 1
        assert "absent.json" in capsys.readouterr().err


class TestReport:
    def test_comparison_table(self, workspace, capsys, tmp_path):
        stable = workspace / "run_stable" / "manifest.json"
        baseline = workspace / "run_baseline" / "manifest.json"
        csv_out = tmp_path / "report.csv"
        rc = main(["report", str(baseline), str(stable), "--csv", str(csv_out)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "improvement_gcn_pct" in out
        text = csv_out.read_text().strip().split("\n")
        assert text[0].startswith("mu,variant,accuracy")
        assert len(text) == 1 + 3  # baseline, stable, improvement rows

    def test_single_manifest_no_improvement_row(self, workspace, capsys):
        rc = main(["report", str(workspace / "run_stable" / "manifest.json")])
        assert rc == 0
        assert "improvement" not in capsys.readouterr().out

    def test_bad_manifest_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        rc = main(["report", str(bad)])
        assert rc == 1
