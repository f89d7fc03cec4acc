"""Command-line contracts: subcommands, dry runs, config dumping/overrides,
deterministic artifacts, error reporting."""

import hashlib
import os
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from longvid.cli import EXIT_CONFIG, EXIT_OK, main

FAST = [
    "--set", "data.train_samples=8",
    "--set", "data.eval_samples=4",
    "--set", "train.batch_size=4",
    "--set", "train.stage1_steps=3",
    "--set", "train.stage2_steps=3",
]


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "longvid", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        env={**os.environ, "PYTHONHASHSEED": "0"},
    )


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


# ---------------------------------------------------------------------------
# validation and dumping
# ---------------------------------------------------------------------------


def test_unknown_key_rejected_with_path(workdir, capsys):
    cfg = workdir / "bad.yaml"
    cfg.write_text("losses:\n  temprature: 0.05\n")
    code = main(["train-stage1", "--config", str(cfg), "--dry-run"])
    assert code == EXIT_CONFIG
    assert "losses.temprature" in capsys.readouterr().err


def test_invalid_value_names_key_and_reason(workdir, capsys):
    cfg = workdir / "bad.yaml"
    cfg.write_text("losses:\n  temperature: -2\n")
    code = main(["train-stage1", "--config", str(cfg), "--dry-run"])
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "losses.temperature" in err and "> 0" in err


def test_schedule_validation_reported(workdir, capsys):
    cfg = workdir / "bad.yaml"
    cfg.write_text("data:\n  frames_per_clip: 6\n")
    code = main(["gen-data", "--config", str(cfg), "--dry-run"])
    assert code == EXIT_CONFIG
    assert "model.video.stages" in capsys.readouterr().err


def test_dump_config_prints_every_default(workdir, capsys):
    code = main(["train-stage1", "--dump-config"])
    assert code == EXIT_OK
    doc = yaml.safe_load(capsys.readouterr().out)
    assert doc["losses"]["temperature"] == 0.05
    assert doc["losses"]["mtc_weight"] == 1.0
    assert doc["losses"]["vtm_weight"] == 10.0
    assert doc["train"]["weight_decay"] == 0.05
    assert [s["temporal_window"] for s in doc["model"]["video"]["stages"]] == [2, 4, 8, 16, 32]


def test_set_overrides_and_seed_flag(workdir, capsys):
    code = main(["gen-data", "--dump-config", "--seed", "9", "--set", "losses.mtc_weight=0.25"])
    assert code == EXIT_OK
    doc = yaml.safe_load(capsys.readouterr().out)
    assert doc["seed"] == 9
    assert doc["losses"]["mtc_weight"] == 0.25


def test_env_seed_used_when_flag_absent(workdir, capsys, monkeypatch):
    monkeypatch.setenv("HTWA_SEED", "77")
    assert main(["gen-data", "--dump-config"]) == EXIT_OK
    assert yaml.safe_load(capsys.readouterr().out)["seed"] == 77
    # flag beats env
    assert main(["gen-data", "--dump-config", "--seed", "5"]) == EXIT_OK
    assert yaml.safe_load(capsys.readouterr().out)["seed"] == 5


# ---------------------------------------------------------------------------
# dry runs touch nothing
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "command",
    [
        ["gen-data"],
        ["train-stage1"],
        ["train-stage2"],
        ["eval-retrieval"],
        ["gradcheck"],
        ["analyze-cost"],
    ],
)
def test_dry_run_creates_no_files(workdir, capsys, command):
    before = set(Path(workdir).rglob("*"))
    code = main([*command, "--dry-run", *FAST])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "plan" in out
    assert set(Path(workdir).rglob("*")) == before


# ---------------------------------------------------------------------------
# artifact flows
# ---------------------------------------------------------------------------


def test_gen_data_then_train_then_eval(workdir, capsys):
    assert main(["gen-data", *FAST]) == EXIT_OK
    assert (workdir / "data/toy/train.shard").exists()
    assert (workdir / "data/toy/eval.shard").exists()

    assert main(["train-stage1", *FAST]) == EXIT_OK
    assert (workdir / "runs/toy/stage1_metrics.csv").exists()
    assert (workdir / "runs/toy/stage1.ckpt").exists()
    header = (workdir / "runs/toy/stage1_metrics.csv").read_text().splitlines()[0]
    assert header == "step,lr,loss_total,loss_global,loss_mtc,loss_mlm,loss_vtm"

    assert main(["eval-retrieval", *FAST]) == EXIT_OK
    assert (workdir / "runs/toy/retrieval.csv").exists()

    assert main(["train-stage2", *FAST]) == EXIT_OK
    assert (workdir / "runs/toy/stage2_metrics.csv").exists()
    capsys.readouterr()


def test_train_stage2_without_checkpoint_names_path(workdir, capsys):
    code = main(["train-stage2", *FAST])
    assert code != EXIT_OK
    assert "stage1.ckpt" in capsys.readouterr().err


def test_gradcheck_writes_report(workdir, capsys):
    code = main(["gradcheck", "--seeds", "0", *FAST])
    assert code == EXIT_OK
    report = (workdir / "runs/toy/gradcheck.txt").read_text()
    assert "PASS" in report
    capsys.readouterr()


def test_analyze_cost_row_count(workdir, capsys):
    code = main(["analyze-cost", "--schedule", "2,4,8,16,32", "--frames", "32"])
    assert code == EXIT_OK
    rows = (workdir / "runs/toy/cost.csv").read_text().splitlines()
    assert len(rows) == 1 + 5  # header + one row per stage
    out = capsys.readouterr().out
    assert "hierarchical total" in out


def test_analyze_cost_rejects_bad_schedule(workdir, capsys):
    code = main(["analyze-cost", "--schedule", "3,32", "--frames", "32"])
    assert code == EXIT_CONFIG
    assert "schedule" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# determinism across processes
# ---------------------------------------------------------------------------


def _digests(root: Path, names) -> dict:
    return {n: hashlib.sha256((root / n).read_bytes()).hexdigest() for n in names}


def test_repeated_runs_byte_identical(tmp_path):
    digests = []
    for sub in ("one", "two"):
        cwd = tmp_path / sub
        cwd.mkdir()
        r = run_cli(["gen-data", *FAST, "--seed", "3"], cwd)
        assert r.returncode == 0, r.stderr
        r = run_cli(["train-stage1", *FAST, "--seed", "3"], cwd)
        assert r.returncode == 0, r.stderr
        r = run_cli(["train-stage2", *FAST, "--seed", "3"], cwd)
        assert r.returncode == 0, r.stderr
        r = run_cli(["eval-retrieval", *FAST, "--seed", "3"], cwd)
        assert r.returncode == 0, r.stderr
        digests.append(
            _digests(
                cwd,
                [
                    "data/toy/train.shard",
                    "data/toy/eval.shard",
                    "runs/toy/stage1_metrics.csv",
                    "runs/toy/stage1.ckpt",
                    "runs/toy/stage2_metrics.csv",
                    "runs/toy/stage2.ckpt",
                    "runs/toy/retrieval.csv",
                ],
            )
        )
    assert digests[0] == digests[1]


def test_different_seeds_differ(tmp_path):
    hashes = []
    for seed in ("3", "4"):
        cwd = tmp_path / f"s{seed}"
        cwd.mkdir()
        r = run_cli(["train-stage1", *FAST, "--seed", seed], cwd)
        assert r.returncode == 0, r.stderr
        hashes.append(hashlib.sha256((cwd / "runs/toy/stage1.ckpt").read_bytes()).hexdigest())
    assert hashes[0] != hashes[1]
