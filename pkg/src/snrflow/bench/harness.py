"""Timing sweeps for the attention kernels and log-log scaling fits.

A cell is one (implementation, sequence length) pair. Inputs are drawn from a generator
seeded by (seed, N), so every implementation sees the same tokens at a given length.
Before a cell is timed its output is checked against a float64 linear-attention
reference; a cell that fails the check, or runs out of memory, is reported as failed
and the sweep moves on.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Literal

import numpy as np

from snrflow.core.tensor import DType, Tensor, make_rng, random_normal
from snrflow.data.models import AttentionConfig, BenchPoint, ScalingFit
from snrflow.errors import DomainError, InsufficientDataError
from snrflow.nn.attention import (
    linear_attention_forward,
    linear_attention_vjp,
    naive_attention_forward,
    naive_attention_vjp,
)

logger = logging.getLogger(__name__)

Impl = Literal["linear", "naive", "noop"]
IMPLS: tuple[Impl, ...] = ("linear", "naive", "noop")
CSV_HEADER = ["impl", "n", "d", "heads", "rep", "seconds"]

MIN_REPS = 5
MIN_FIT_POINTS = 4
MIN_FIT_SPAN = 8.0
# normwise, against a float64 reference. float32 summation error grows like eps * sqrt(N),
# about 5e-6 at N = 8192, so a 1e-6 gate would reject correct kernels at large N
GATE_RTOL = {"f32": 1e-5, "f64": 1e-9}


@dataclass(frozen=True)
class BenchInputs:
    q: Tensor
    k: Tensor
    v: Tensor
    grad: Tensor


def make_inputs(n: int, d: int, heads: int, dtype: DType, seed: int) -> BenchInputs:
    """Per-head token matrices [heads, N, d], identical for every implementation"""
    rng = make_rng(seed * 1_000_003 + n)
    shape = (heads, n, d)
    q, k, v, g = (random_normal(rng, shape, dtype) for _ in range(4))
    return BenchInputs(q=q, k=k, v=v, grad=g)


def _kernel(impl: Impl, backward: bool, cfg: AttentionConfig) -> Callable[[BenchInputs], Tensor]:
    if impl == "noop":
        return lambda x: x.v
    forward = linear_attention_forward if impl == "linear" else naive_attention_forward
    vjp = linear_attention_vjp if impl == "linear" else naive_attention_vjp

    def run(x: BenchInputs) -> Tensor:
        out = np.stack([forward(x.q[h], x.k[h], x.v[h], cfg) for h in range(x.q.shape[0])])
        if backward:
            for h in range(x.q.shape[0]):
                vjp(x.q[h], x.k[h], x.v[h], x.grad[h], cfg)
        return out

    return run


def correctness_gate(impl: Impl, inputs: BenchInputs, cfg: AttentionConfig) -> float | None:
    """Normwise relative error against the float64 reference, None for the no-op"""
    if impl == "noop":
        return None
    forward = linear_attention_forward if impl == "linear" else naive_attention_forward
    heads = inputs.q.shape[0]
    out = np.stack([forward(inputs.q[h], inputs.k[h], inputs.v[h], cfg) for h in range(heads)])
    ref = np.stack(
        [
            linear_attention_forward(
                inputs.q[h].astype(np.float64),
                inputs.k[h].astype(np.float64),
                inputs.v[h].astype(np.float64),
                cfg,
            )
            for h in range(heads)
        ]
    )
    return float(np.linalg.norm(out - ref) / max(np.linalg.norm(ref), np.finfo(np.float64).tiny))


def time_cell(
    impl: Impl,
    n: int,
    d: int,
    heads: int,
    reps: int,
    warmup: int,
    dtype: DType = "f32",
    backward: bool = False,
    seed: int = 0,
) -> BenchPoint:
    """Gate and time one (implementation, N) cell"""
    point = BenchPoint(impl=impl, n_tokens=n, d=d, heads=heads, dtype=dtype, backward=backward)
    cfg = AttentionConfig(num_heads=heads, head_dim=d)
    try:
        inputs = make_inputs(n, d, heads, dtype, seed)
        error = correctness_gate(impl, inputs, cfg)
        if error is not None and error > GATE_RTOL[dtype]:
            point.status = "failed"
            point.error = f"correctness gate failed: relative error {error:.3g} > {GATE_RTOL[dtype]:g}"
            logger.warning("%s N=%d: %s", impl, n, point.error)
            return point
        run = _kernel(impl, backward, cfg)
        for _ in range(warmup):
            run(inputs)
        samples = []
        for _ in range(reps):
            start = time.perf_counter()
            run(inputs)
            samples.append(time.perf_counter() - start)
    except MemoryError as e:
        point.status = "failed"
        point.error = f"out of memory: {e}"
        logger.warning("%s N=%d ran out of memory", impl, n)
        return point

    point.samples = samples
    point.mean_seconds = float(np.mean(samples))
    point.std_seconds = float(np.std(samples, ddof=1))
    logger.debug("%s N=%d: %.6f s +- %.6f", impl, n, point.mean_seconds, point.std_seconds)
    return point


def _check_sweep(n_list: Sequence[int], reps: int, warmup: int) -> None:
    if len(n_list) < MIN_FIT_POINTS:
        raise DomainError(f"n_list needs at least {MIN_FIT_POINTS} lengths, got {len(n_list)}")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise DomainError(f"n_list must be strictly ascending: {list(n_list)}")
    if reps < MIN_REPS:
        raise DomainError(f"reps must be >= {MIN_REPS}, got {reps}")
    if warmup < 1:
        raise DomainError(f"warmup must be >= 1, got {warmup}")


def run_sweep(
    impl: Impl,
    n_list: Sequence[int],
    d: int,
    heads: int,
    reps: int = MIN_REPS,
    warmup: int = 1,
    *,
    dtype: DType = "f32",
    backward: bool = False,
    seed: int = 0,
) -> list[BenchPoint]:
    """Time one implementation at every length of ``n_list``, in order"""
    _check_sweep(n_list, reps, warmup)
    return [time_cell(impl, n, d, heads, reps, warmup, dtype, backward, seed) for n in n_list]


def run_cells(
    impls: Iterable[Impl],
    n_list: Sequence[int],
    d: int,
    heads: int,
    reps: int = MIN_REPS,
    warmup: int = 1,
    *,
    dtype: DType = "f32",
    backward: bool = False,
    seed: int = 0,
    max_workers: int = 1,
    on_point: Callable[[BenchPoint], None] | None = None,
) -> list[BenchPoint]:
    """Every (implementation, N) cell; ``max_workers > 1`` times cells concurrently.

    Points come back ordered by implementation then N regardless of completion order.
    """
    _check_sweep(n_list, reps, warmup)
    cells = [(impl, n) for impl in impls for n in n_list]
    results: dict[tuple[str, int], BenchPoint] = {}
    if max_workers <= 1:
        for impl, n in cells:
            results[(impl, n)] = time_cell(impl, n, d, heads, reps, warmup, dtype, backward, seed)
            if on_point is not None:
                on_point(results[(impl, n)])
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {
                executor.submit(time_cell, impl, n, d, heads, reps, warmup, dtype, backward, seed): (impl, n)
                for impl, n in cells
            }
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                if on_point is not None:
                    on_point(results[futures[future]])
    return [results[cell] for cell in cells]


def fit_scaling(points: Sequence[BenchPoint]) -> ScalingFit:
    """Least-squares line through (ln N, ln mean seconds) of the successful points"""
    ok = sorted((p for p in points if p.ok and p.mean_seconds and p.mean_seconds > 0), key=lambda p: p.n_tokens)
    n_values = sorted({p.n_tokens for p in ok})
    impl = points[0].impl if points else "?"
    if len(n_values) < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"{impl}: need {MIN_FIT_POINTS} successful lengths to fit, got {len(n_values)}"
        )
    if n_values[-1] / n_values[0] < MIN_FIT_SPAN:
        raise InsufficientDataError(
            f"{impl}: lengths span {n_values[-1] / n_values[0]:.1f}x, need at least {MIN_FIT_SPAN:g}x"
        )
    x = np.log([p.n_tokens for p in ok])
    y = np.log([p.mean_seconds for p in ok])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - float(np.sum(residual**2) / total) if total > 0 else 1.0
    return ScalingFit(
        impl=impl,
        exponent=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        n_values=n_values,
    )


def baseline_seconds(points: Sequence[BenchPoint]) -> float | None:
    """Mean harness overhead measured by the no-op cells"""
    noop = [p.mean_seconds for p in points if p.impl == "noop" and p.ok and p.mean_seconds is not None]
    return float(np.mean(noop)) if noop else None


def points_to_csv(points: Iterable[BenchPoint]) -> str:
    """One row per timed repetition"""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for point in points:
        for rep, seconds in enumerate(point.samples):
            writer.writerow([point.impl, point.n_tokens, point.d, point.heads, rep, repr(seconds)])
    return buf.getvalue()
