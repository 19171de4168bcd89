"""Tests for checkpoint selection and stability comparison"""

import math

import numpy as np
import pytest

from snrflow.core.tensor import make_rng
from snrflow.data.models import CheckpointMetadata, KneeReport, MetricTrace, Orientation
from snrflow.errors import AllFlatError, NoCheckpointError, TooShortError
from snrflow.esgf.selection import (
    compare_stability,
    knee_reports,
    median_knee,
    oscillation_amplitude,
    select_finetune_checkpoint,
)
from snrflow.persist.checkpoint import Checkpoint


def _report(name, knee):
    return KneeReport(
        metric=name,
        knee_iteration=knee,
        phase_boundaries=(knee + 50, None),
        smoothed_trace=MetricTrace(name=name),
    )


def _checkpoints(every=100, last=1500):
    return [
        Checkpoint(params={}, metadata=CheckpointMetadata(iteration=i))
        for i in range(0, last + 1, every)
    ]


def _trace(values, name="neg_val_loss", orientation=Orientation.HIGHER_BETTER):
    values = [float(v) for v in values]
    return MetricTrace(name=name, orientation=orientation, iterations=list(range(len(values))), values=values)


@pytest.fixture
def fixed_knees(monkeypatch):
    """Patch the detector to return a preset knee per trace name"""
    knees: dict[str, int] = {}

    def fake_detect(trace, cfg=None):
        if trace.name not in knees:
            raise AllFlatError(f"{trace.name} is flat")
        return _report(trace.name, knees[trace.name])

    monkeypatch.setattr("snrflow.esgf.selection.detect_knee", fake_detect)
    return knees


def test_selects_latest_checkpoint_before_knee(fixed_knees):
    fixed_knees["neg_val_loss"] = 730
    chosen = select_finetune_checkpoint([MetricTrace(name="neg_val_loss")], _checkpoints())
    assert chosen.iteration == 700


def test_uses_median_across_traces(fixed_knees):
    fixed_knees.update({"a": 500, "b": 700, "c": 900})
    traces = [MetricTrace(name=n) for n in ("a", "b", "c")]
    assert median_knee(knee_reports(traces)) == 700
    assert select_finetune_checkpoint(traces, _checkpoints()).iteration == 700


def test_knee_on_checkpoint_is_selected(fixed_knees):
    fixed_knees["x"] = 600
    assert select_finetune_checkpoint([MetricTrace(name="x")], _checkpoints()).iteration == 600


def test_no_checkpoint_before_knee(fixed_knees):
    fixed_knees["x"] = 50
    with pytest.raises(NoCheckpointError):
        select_finetune_checkpoint([MetricTrace(name="x")], _checkpoints()[1:])
    with pytest.raises(NoCheckpointError):
        select_finetune_checkpoint([], _checkpoints())


def test_flat_traces_are_skipped(fixed_knees):
    """Test failures are skipped unless every trace fails"""
    fixed_knees["good"] = 400
    reports = knee_reports([MetricTrace(name="flat"), MetricTrace(name="good")])
    assert [r.metric for r in reports] == ["good"]
    with pytest.raises(AllFlatError):
        knee_reports([MetricTrace(name="flat")])


def test_real_detector_errors_propagate():
    with pytest.raises(TooShortError):
        knee_reports([_trace(range(5))])


def _noisy(seed, n=60, level=1.0, noise=0.01):
    return level + noise * make_rng(seed).standard_normal(n)


@pytest.mark.parametrize("seed", range(50))
def test_diverged_run_is_collapse(seed):
    """Test a NaN marker labels the run Collapse and the other run wins"""
    rng = make_rng(seed)
    collapse_at = int(rng.integers(20, 55))
    values = _noisy(seed)
    values[collapse_at] = math.nan
    broken = _trace(values[: collapse_at + 1])
    stable = _trace(_noisy(seed + 1000))
    report = compare_stability(broken, stable)
    assert report.run_a.label == "Collapse"
    assert report.run_a.divergence_iteration == collapse_at
    assert report.run_a.divergence_events == 1
    assert report.run_b.label != "Collapse"
    assert report.better_final == "b"
    assert compare_stability(stable, broken).better_final == "a"


def test_identical_runs_tie():
    trace = _trace(_noisy(0))
    report = compare_stability(trace, trace)
    assert report.better_final == "tie"
    assert report.final_metric_delta == 0.0
    assert report.oscillation_delta == 0.0
    assert report.run_a.label == report.run_b.label == "Stable"


def test_large_oscillation_is_unstable():
    smooth = _trace(np.linspace(0.0, 1.0, 40) + 0.001 * make_rng(1).standard_normal(40))
    swinging = _trace(np.linspace(0.0, 1.0, 40) + 0.2 * (-1.0) ** np.arange(40))
    report = compare_stability(smooth, swinging)
    assert report.run_a.label == "Stable"
    assert report.run_b.label == "Unstable"
    assert report.oscillation_delta < 0


def test_lower_better_orientation_decides_winner():
    low = _trace(np.full(30, 0.1), "val_loss", Orientation.LOWER_BETTER)
    high = _trace(np.full(30, 0.3), "val_loss", Orientation.LOWER_BETTER)
    report = compare_stability(low, high)
    assert report.final_metric_delta == pytest.approx(-0.2)
    assert report.better_final == "a"
    assert report.orientation == Orientation.LOWER_BETTER


def test_both_collapsed_is_undecided():
    a = _trace([1.0, 1.1, math.nan])
    b = _trace([1.0, math.nan])
    assert compare_stability(a, b, window=3).better_final == "undecided"


def test_oscillation_amplitude_removes_trend():
    line = _trace(3.0 * np.arange(20))
    assert oscillation_amplitude(line, 9) == pytest.approx(0.0, abs=1e-9)
    zigzag = _trace(0.5 * (-1.0) ** np.arange(20))
    assert oscillation_amplitude(zigzag, 9) == pytest.approx(0.5, rel=0.05)
    assert oscillation_amplitude(_trace([1.0, 2.0]), 9) == 0.0
