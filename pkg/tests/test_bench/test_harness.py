"""Tests for the attention benchmark harness"""

import csv
import io

import pytest

from snrflow.bench import harness
from snrflow.bench.harness import (
    baseline_seconds,
    correctness_gate,
    fit_scaling,
    make_inputs,
    points_to_csv,
    run_cells,
    run_sweep,
    time_cell,
)
from snrflow.data.models import AttentionConfig, BenchPoint
from snrflow.errors import DomainError, InsufficientDataError

N_LIST = [16, 32, 64, 128]


def _synthetic(impl, exponent, n_values=(256, 512, 1024, 2048, 4096), scale=1e-7):
    return [
        BenchPoint(impl=impl, n_tokens=n, d=8, heads=1, mean_seconds=scale * n**exponent, samples=[scale * n**exponent])
        for n in n_values
    ]


def test_inputs_depend_only_on_length_and_seed():
    a = make_inputs(64, 8, 2, "f64", seed=1)
    b = make_inputs(64, 8, 2, "f64", seed=1)
    assert a.q.shape == (2, 64, 8)
    assert (a.q == b.q).all()
    assert not (make_inputs(32, 8, 2, "f64", seed=1).q[:, :32] == a.q[:, :32]).all()
    assert make_inputs(16, 4, 1, "f32", seed=0).v.dtype.name == "float32"


@pytest.mark.parametrize("impl,dtype,tol", [("linear", "f32", 1e-5), ("naive", "f64", 1e-9), ("naive", "f32", 1e-5)])
def test_correctness_gate_passes(impl, dtype, tol):
    inputs = make_inputs(256, 16, 2, dtype, seed=0)
    assert correctness_gate(impl, inputs, AttentionConfig(num_heads=2, head_dim=16)) < tol


def test_noop_has_no_gate():
    inputs = make_inputs(16, 4, 1, "f32", seed=0)
    assert correctness_gate("noop", inputs, AttentionConfig(num_heads=1, head_dim=4)) is None


def test_time_cell_collects_repetitions():
    point = time_cell("linear", 64, 8, 2, reps=5, warmup=1, backward=True)
    assert point.ok
    assert len(point.samples) == 5
    assert point.mean_seconds > 0
    assert point.std_seconds >= 0
    assert point.backward


def test_gate_failure_marks_cell_failed(monkeypatch):
    monkeypatch.setattr(harness, "correctness_gate", lambda impl, inputs, cfg: 1.0)
    point = time_cell("linear", 32, 4, 1, reps=5, warmup=1)
    assert point.status == "failed"
    assert "correctness gate" in point.error
    assert point.samples == []


@pytest.mark.parametrize("dtype,status", [("f32", "ok"), ("f64", "failed")])
def test_gate_threshold_follows_dtype(monkeypatch, dtype, status):
    monkeypatch.setattr(harness, "correctness_gate", lambda impl, inputs, cfg: 5e-6)
    point = time_cell("linear", 32, 4, 1, reps=5, warmup=1, dtype=dtype)
    assert point.status == status


def test_memory_error_marks_cell_failed(monkeypatch):
    def exhausted(*args, **kwargs):
        raise MemoryError("cannot allocate")

    monkeypatch.setattr(harness, "make_inputs", exhausted)
    point = time_cell("naive", 1 << 20, 64, 4, reps=5, warmup=1)
    assert point.status == "failed"
    assert "out of memory" in point.error


@pytest.mark.parametrize(
    "n_list,reps,warmup",
    [([16, 32, 64], 5, 1), ([16, 64, 32, 128], 5, 1), (N_LIST, 4, 1), (N_LIST, 5, 0)],
    ids=["too-few-lengths", "not-ascending", "too-few-reps", "no-warmup"],
)
def test_sweep_arguments_validated(n_list, reps, warmup):
    with pytest.raises(DomainError):
        run_sweep("linear", n_list, 4, 1, reps, warmup)


def test_run_sweep_keeps_length_order():
    points = run_sweep("noop", N_LIST, 4, 1)
    assert [p.n_tokens for p in points] == N_LIST


@pytest.mark.parametrize("workers", [1, 3])
def test_run_cells_orders_by_impl_then_length(workers):
    seen = []
    points = run_cells(["linear", "noop"], N_LIST, 4, 1, max_workers=workers, on_point=seen.append)
    assert [(p.impl, p.n_tokens) for p in points] == [(i, n) for i in ("linear", "noop") for n in N_LIST]
    assert len(seen) == 8
    assert all(p.ok for p in points)


@pytest.mark.parametrize("exponent", [1.0, 2.0])
def test_fit_recovers_synthetic_exponent(exponent):
    fit = fit_scaling(_synthetic("linear", exponent))
    assert fit.exponent == pytest.approx(exponent, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-9)
    assert fit.n_values == [256, 512, 1024, 2048, 4096]


def test_fit_skips_failed_points_and_needs_enough_data():
    points = _synthetic("naive", 2.0)
    points[-1].status = "failed"
    assert fit_scaling(points).n_values == [256, 512, 1024, 2048]
    points[-2].status = "failed"
    with pytest.raises(InsufficientDataError):
        fit_scaling(points)
    with pytest.raises(InsufficientDataError):
        fit_scaling(_synthetic("linear", 1.0, n_values=(16, 17, 18, 19)))
    with pytest.raises(InsufficientDataError):
        fit_scaling([])


def test_baseline_from_noop_cells():
    noop = _synthetic("noop", 0.0, scale=2e-6)
    assert baseline_seconds(noop + _synthetic("linear", 1.0)) == pytest.approx(2e-6)
    assert baseline_seconds(_synthetic("linear", 1.0)) is None


def test_csv_has_one_row_per_repetition():
    point = BenchPoint(impl="linear", n_tokens=64, d=8, heads=2, samples=[0.5, 0.25])
    rows = list(csv.reader(io.StringIO(points_to_csv([point]))))
    assert rows[0] == ["impl", "n", "d", "heads", "rep", "seconds"]
    assert rows[1:] == [["linear", "64", "8", "2", "0", "0.5"], ["linear", "64", "8", "2", "1", "0.25"]]


@pytest.mark.slow
def test_measured_scaling_separates_kernels():
    """Test linear attention scales close to N and the naive kernel close to N^2"""
    n_list = [512, 1024, 2048, 4096]
    linear = fit_scaling(run_sweep("linear", n_list, 32, 1, reps=5, warmup=1))
    naive = fit_scaling(run_sweep("naive", n_list, 32, 1, reps=5, warmup=1))
    assert linear.exponent < 1.4
    assert naive.exponent > 1.6
