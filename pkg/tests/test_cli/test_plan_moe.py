"""Tests for the plan-moe command"""

import json

import pytest

from snrflow.cli.main import app
from snrflow.moe.partition import parse_routing_table


def plan(runner, cli_config, *args):
    return runner.invoke(app, ["--config", str(cli_config), "plan-moe", *args])


def test_default_partition_json(runner, cli_config):
    result = plan(runner, cli_config)
    assert result.exit_code == 0
    table = json.loads(result.stdout)
    assert table["strategy"] == "snr"
    assert table["num_experts"] == 4
    assert table["lambda_boundaries"] == pytest.approx([-5.4657, -3.8918, 2.4938], abs=1e-3)
    assert table["t_boundaries"] == pytest.approx([0.9389, 0.875, 0.2233], abs=1e-3)
    assert table["lambda_anchor"] == pytest.approx(-3.8918, abs=1e-3)
    assert [row["label"] for row in table["rows"]] == [
        "Initial Denoising",
        "Coarse Structure",
        "Texture Generation",
        "Detail Refinement",
    ]


def test_csv_output_parses_back(runner, cli_config):
    result = plan(runner, cli_config, "--format", "csv")
    assert result.exit_code == 0
    assert result.stdout.splitlines()[0] == "expert,label,lambda_low,lambda_high,t_low,t_high"
    table = parse_routing_table(result.stdout, "csv")
    assert table.num_experts == 4
    assert table.t_boundaries == pytest.approx([0.9389, 0.875, 0.2233], abs=1e-3)


def test_flags_override_config(runner, cli_config):
    result = plan(runner, cli_config, "--depth", "1", "--anchor-t", "0.5")
    table = json.loads(result.stdout)
    assert table["num_experts"] == 2
    assert table["t_boundaries"] == [0.5]
    assert table["lambda_boundaries"] == pytest.approx([0.0], abs=1e-12)


def test_depth_zero_is_single_expert(runner, cli_config):
    table = json.loads(plan(runner, cli_config, "--depth", "0").stdout)
    assert table["num_experts"] == 1
    assert table["t_boundaries"] == []
    assert table["rows"][0]["label"] == "Full Trajectory"


def test_uniform_strategy(runner, cli_config):
    table = json.loads(plan(runner, cli_config, "--strategy", "uniform").stdout)
    assert table["strategy"] == "uniform"
    assert table["t_boundaries"] == pytest.approx([0.75, 0.5, 0.25])


def test_table_format(runner, cli_config):
    result = plan(runner, cli_config, "--format", "table")
    assert result.exit_code == 0
    assert "Expert partition" in result.stdout


@pytest.mark.parametrize(
    "args",
    [["--strategy", "cosine"], ["--format", "xml"]],
)
def test_usage_errors(runner, cli_config, args):
    assert plan(runner, cli_config, *args).exit_code == 2


def test_anchor_outside_range_fails(runner, cli_config):
    result = plan(runner, cli_config, "--anchor-t", "0.999")
    assert result.exit_code == 1
    assert result.stdout == ""


def test_bad_sigma_range_fails(runner, cli_config):
    result = plan(runner, cli_config, "--sigma-min", "5", "--sigma-max", "2")
    assert result.exit_code == 1
