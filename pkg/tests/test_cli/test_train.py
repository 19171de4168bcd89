"""Tests for the train and sample commands"""

import json
from pathlib import Path

import pytest

from snrflow.cli.main import app
from snrflow.cli.runtime import EXIT_DIVERGED
from snrflow.errors import DivergenceError

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


def train(runner, cli_config, *args):
    return runner.invoke(app, ["--config", str(cli_config), "train", *args])


@pytest.fixture
def trained(runner, cli_config):
    result = train(runner, cli_config)
    assert result.exit_code == 0, result.output
    return json.loads(result.stdout)


def test_train_writes_run_directory(trained):
    run_dir = Path(trained["run_dir"])
    assert trained["status"] == "completed"
    assert trained["iterations"] == 20
    assert trained["experts"] == 1
    assert run_dir.name.startswith("train-") and run_dir.name.endswith("-s3")
    assert (run_dir / "traces.csv").exists()
    assert (run_dir / "config.toml").exists()
    assert [Path(p).name for p in trained["checkpoints"]] == [
        "stage1-000000.lsr",
        "stage1-000010.lsr",
        "stage1-000020.lsr",
    ]
    assert all(Path(p).exists() for p in trained["checkpoints"])
    assert set(trained["final_metrics"]) == {"train_loss", "neg_val_loss", "energy_distance"}


def test_flags_reach_the_config_snapshot(runner, cli_config):
    result = runner.invoke(app, ["--config", str(cli_config), "--seed", "9", "train", "-n", "10", "--lr", "0.01"])
    assert result.exit_code == 0
    summary = json.loads(result.stdout)
    run_dir = Path(summary["run_dir"])
    assert run_dir.name.endswith("-s9")
    with open(run_dir / "config.toml", "rb") as f:
        snapshot = tomllib.load(f)
    assert snapshot["seed"] == 9
    assert snapshot["train"]["iterations"] == 10
    assert snapshot["optimizer"]["lr"] == 0.01
    assert summary["iterations"] == 10


def test_moe_training_writes_routing(runner, cli_config):
    result = train(runner, cli_config, "--moe")
    assert result.exit_code == 0
    summary = json.loads(result.stdout)
    assert summary["experts"] == 4
    routing = json.loads((Path(summary["run_dir"]) / "routing.json").read_text())
    assert routing["num_experts"] == 4


def test_out_dir_flag(runner, cli_config, tmp_path):
    result = runner.invoke(app, ["--config", str(cli_config), "--out-dir", str(tmp_path / "elsewhere"), "train"])
    assert result.exit_code == 0
    assert Path(json.loads(result.stdout)["run_dir"]).parent == tmp_path / "elsewhere"


def test_divergence_exits_with_code_3(runner, cli_config, monkeypatch):
    def diverging(*args, **kwargs):
        raise DivergenceError("loss is nan", iteration=7)

    monkeypatch.setattr("snrflow.cli.commands.train.train_loop", diverging)
    result = train(runner, cli_config)
    assert result.exit_code == EXIT_DIVERGED
    report = json.loads(result.stdout)
    assert report["status"] == "diverged"
    assert report["iteration"] == 7
    assert report["last_good_checkpoint"] is None


class TestSample:
    """Sampling from a trained checkpoint"""

    def test_default_count_and_files(self, runner, cli_config, trained):
        checkpoint = trained["checkpoints"][-1]
        result = runner.invoke(app, ["--config", str(cli_config), "sample", checkpoint])
        assert result.exit_code == 0, result.output
        summary = json.loads(result.stdout)
        assert summary["shape"] == [32, 2]
        assert summary["num_steps"] == 4
        samples_csv = Path(summary["files"][1])
        lines = samples_csv.read_text().splitlines()
        assert lines[0] == "x0,x1"
        assert len(lines) == 33
        assert Path(summary["files"][0]).suffix == ".lsr"

    def test_num_and_steps(self, runner, cli_config, trained):
        checkpoint = trained["checkpoints"][-1]
        result = runner.invoke(app, ["--config", str(cli_config), "sample", checkpoint, "-n", "5", "--steps", "2"])
        summary = json.loads(result.stdout)
        assert summary["shape"] == [5, 2]
        assert summary["num_steps"] == 2

    def test_same_seed_same_samples(self, runner, cli_config, trained):
        checkpoint = trained["checkpoints"][-1]
        outputs = []
        for _ in range(2):
            result = runner.invoke(app, ["--config", str(cli_config), "sample", checkpoint, "-n", "4"])
            outputs.append(Path(json.loads(result.stdout)["files"][1]).read_text())
        assert outputs[0] == outputs[1]

    def test_moe_checkpoint(self, runner, cli_config):
        summary = json.loads(train(runner, cli_config, "--moe").stdout)
        result = runner.invoke(app, ["--config", str(cli_config), "sample", summary["checkpoints"][-1], "-n", "3"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["shape"] == [3, 2]

    def test_garbage_checkpoint(self, runner, cli_config, tmp_path):
        path = tmp_path / "junk.lsr"
        path.write_bytes(b"not a checkpoint at all")
        result = runner.invoke(app, ["--config", str(cli_config), "sample", str(path)])
        assert result.exit_code == 1
        assert result.stdout == ""
