"""Tests for data models"""

import math

import pytest

from snrflow.data.models import (
    AttentionConfig,
    ExpertPartition,
    KneeConfig,
    MetricTrace,
    Orientation,
    RunRecord,
)


def test_attention_config_model_dim():
    """Test model_dim is heads times head_dim"""
    assert AttentionConfig(num_heads=3, head_dim=5).model_dim == 15
    with pytest.raises(ValueError):
        AttentionConfig(num_heads=0)


def test_metric_trace_validation():
    """Test iteration order and infinite values are rejected"""
    with pytest.raises(ValueError):
        MetricTrace(name="x", iterations=[1, 1], values=[0.0, 1.0])
    with pytest.raises(ValueError):
        MetricTrace(name="x", iterations=[1], values=[math.inf])
    with pytest.raises(ValueError):
        MetricTrace(name="x", iterations=[1, 2], values=[0.0])
    with pytest.raises(ValueError):
        MetricTrace(name="x", iterations=[-1], values=[0.0])


def test_metric_trace_append_and_divergence():
    """Test NaN markers and the finite prefix"""
    trace = MetricTrace(name="neg_val_loss")
    trace.append(0, 1.0)
    trace.append(5, 2.0)
    with pytest.raises(ValueError):
        trace.append(5, 3.0)
    with pytest.raises(ValueError):
        trace.append(6, -math.inf)
    trace.append(6, math.nan)
    trace.append(7, 4.0)
    trace.append(8, math.nan)
    assert len(trace) == 5
    assert trace.divergence_iteration == 6
    assert trace.divergence_events == 2
    prefix = trace.finite_prefix()
    assert prefix.iterations == [0, 5]
    assert prefix.orientation == Orientation.HIGHER_BETTER


def test_metric_trace_lists_are_independent():
    """Test default lists are not shared between traces"""
    a, b = MetricTrace(name="a"), MetricTrace(name="b")
    a.append(1, 1.0)
    assert len(b) == 0


def test_expert_partition_intervals():
    """Test interval lookup and the open ends of the log-SNR axis"""
    partition = ExpertPartition(num_experts=2, t_boundaries=[0.5], lambda_boundaries=[0.0])
    assert partition.t_interval(0) == (0.5, 1.0)
    assert partition.t_interval(1) == (0.0, 0.5)
    assert partition.lambda_interval(0) == (-math.inf, 0.0)
    assert partition.lambda_interval(1) == (0.0, math.inf)
    assert partition.label(1) == "Expert 2"
    with pytest.raises(ValueError):
        ExpertPartition(num_experts=2, t_boundaries=[0.5], lambda_boundaries=[0.0], labels=["only one"])


def test_knee_config_defaults():
    cfg = KneeConfig()
    assert (cfg.window, cfg.min_gain, cfg.osc_var_ratio) == (9, 0.005, 4.0)


def test_run_record_status():
    record = RunRecord(command="train", seed=1, config_fingerprint="f", run_dir="runs/x")
    assert record.status == "running"
    assert record.started_at.tzinfo is not None
    with pytest.raises(ValueError):
        RunRecord(command="train", seed=1, config_fingerprint="f", run_dir="x", status="paused")
