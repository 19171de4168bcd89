"""Tests for CLI formatters"""

import io
import json

import pytest
from rich.console import Console

from snrflow.cli.formatters import format_report
from snrflow.cli.formatters.json import to_jsonable
from snrflow.data.models import BenchPoint, BenchSummary, RunRecord, ScalingFit, ValidationReport
from snrflow.moe.partition import derive_partition, routing_table
from snrflow.moe.schedule import LogSnrSchedule


def render(report, format_type):
    buf = io.StringIO()
    format_report(report, format_type, Console(file=buf, width=200))
    return buf.getvalue()


@pytest.fixture
def bench_summary():
    points = [
        BenchPoint(impl="linear", n_tokens=256, d=8, heads=1, samples=[0.1] * 5, mean_seconds=0.1, std_seconds=0.0),
        BenchPoint(impl="naive", n_tokens=256, d=8, heads=1, status="failed", error="MemoryError"),
    ]
    return BenchSummary(
        points=points,
        fits={"linear": ScalingFit(impl="linear", exponent=1.02, intercept=-9.0, r_squared=0.99, n_values=[256])},
        fit_errors={"naive": "naive: need 4 successful lengths to fit, got 0"},
    )


def test_json_round_trips_models(bench_summary):
    data = json.loads(render(bench_summary, "json"))
    assert data["points"][1]["status"] == "failed"
    assert data["fits"]["linear"]["exponent"] == 1.02


def test_to_jsonable_nests():
    record = RunRecord(command="train", seed=1, config_fingerprint="ab", run_dir="runs/x")
    out = to_jsonable({"runs": [record], "n": 1})
    assert out["runs"][0]["command"] == "train"
    assert isinstance(out["runs"][0]["started_at"], str)


def test_routing_table():
    out = render(routing_table(derive_partition(LogSnrSchedule())), "table")
    assert "Expert partition" in out
    assert "Detail Refinement" in out
    assert "-3.8918" in out


def test_bench_table(bench_summary):
    out = render(bench_summary, "table")
    assert "Attention timings" in out
    assert "MemoryError" in out
    assert "exponent 1.020" in out


def test_validation_table():
    out = render(ValidationReport(path="a.lsr", ok=False, errors=["FormatError: bad magic"]), "table")
    assert "invalid" in out
    assert "bad magic" in out


def test_runs_table():
    record = RunRecord(id=4, command="bench", seed=2, config_fingerprint="ab", run_dir="runs/bench-1", exit_code=0)
    out = render([record], "table")
    assert "bench" in out


def test_unknown_report_falls_back_to_json():
    assert json.loads(render({"a": 1}, "table")) == {"a": 1}
