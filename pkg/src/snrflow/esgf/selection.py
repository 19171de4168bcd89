"""Checkpoint selection and stability comparison for guided fine-tuning"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np

from snrflow.data.models import KneeConfig, KneeReport, MetricTrace, Orientation, RunStability, StabilityReport
from snrflow.errors import KneeDetectionError, NoCheckpointError
from snrflow.esgf.knee import detect_knee, fold
from snrflow.persist.checkpoint import Checkpoint

logger = logging.getLogger(__name__)

UNSTABLE_AMPLITUDE_RATIO = 4.0


def knee_reports(traces: Sequence[MetricTrace], cfg: KneeConfig | None = None) -> list[KneeReport]:
    """Knee of every trace that has one; traces without a knee are skipped with a warning"""
    reports: list[KneeReport] = []
    last_error: KneeDetectionError | None = None
    for trace in traces:
        try:
            reports.append(detect_knee(trace, cfg))
        except KneeDetectionError as e:
            logger.warning("skipping trace %s: %s", trace.name, e)
            last_error = e
    if not reports and last_error is not None:
        raise last_error
    return reports


def median_knee(reports: Sequence[KneeReport]) -> float:
    return float(np.median([r.knee_iteration for r in reports]))


def select_finetune_checkpoint(
    traces: Sequence[MetricTrace],
    checkpoints: Sequence[Checkpoint],
    cfg: KneeConfig | None = None,
) -> Checkpoint:
    """Latest checkpoint at or before the median knee across traces"""
    reports = knee_reports(traces, cfg)
    if not reports:
        raise NoCheckpointError("no traces given to locate a knee")
    target = median_knee(reports)
    eligible = [c for c in checkpoints if c.iteration <= target]
    if not eligible:
        raise NoCheckpointError(f"no checkpoint at or before knee iteration {target:g}")
    chosen = max(eligible, key=lambda c: c.iteration)
    logger.info(
        "median knee %g over %s; selected checkpoint at iteration %d",
        target,
        [r.knee_iteration for r in reports],
        chosen.iteration,
    )
    return chosen


def summarize_run(name: str, trace: MetricTrace, window: int, amplitude: float) -> RunStability:
    finite = trace.finite_prefix()
    values = np.asarray(finite.values, dtype=np.float64)
    final = float(np.mean(values[-window:])) if len(values) else None
    return RunStability(
        name=name,
        label="Collapse" if trace.divergence_events else "Stable",
        final_metric=final,
        divergence_events=trace.divergence_events,
        divergence_iteration=trace.divergence_iteration,
        oscillation_amplitude=amplitude,
    )


def oscillation_amplitude(trace: MetricTrace, window: int) -> float:
    """Std of the last ``window`` finite values around their linear trend"""
    tail = fold(trace.finite_prefix())[-window:]
    if len(tail) < 3:
        return 0.0
    x = np.arange(len(tail), dtype=np.float64)
    slope, intercept = np.polyfit(x, tail, 1)
    return float(np.std(tail - (slope * x + intercept)))


def compare_stability(run_a: MetricTrace, run_b: MetricTrace, window: int = 9) -> StabilityReport:
    """Final metric, divergence events and oscillation amplitude of two runs side by side.

    A run holding a divergence marker is labelled Collapse. Otherwise it is Unstable
    when its oscillation amplitude exceeds four times the smaller of the two.
    """
    amp_a = oscillation_amplitude(run_a, window)
    amp_b = oscillation_amplitude(run_b, window)
    a = summarize_run("a", run_a, window, amp_a)
    b = summarize_run("b", run_b, window, amp_b)
    floor = min(amp_a, amp_b)
    for run in (a, b):
        if run.label != "Collapse" and run.oscillation_amplitude > UNSTABLE_AMPLITUDE_RATIO * floor:
            run.label = "Unstable"

    delta = None
    if a.final_metric is not None and b.final_metric is not None:
        delta = a.final_metric - b.final_metric

    better = "undecided"
    if a.label == "Collapse" and b.label != "Collapse":
        better = "b"
    elif b.label == "Collapse" and a.label != "Collapse":
        better = "a"
    elif delta is None or a.label == "Collapse":
        better = "undecided"
    elif math.isclose(delta, 0.0, abs_tol=1e-12):
        better = "tie"
    else:
        higher_wins = run_a.orientation == Orientation.HIGHER_BETTER
        better = "a" if (delta > 0) == higher_wins else "b"

    return StabilityReport(
        metric=run_a.name,
        orientation=run_a.orientation,
        run_a=a,
        run_b=b,
        final_metric_delta=delta,
        oscillation_delta=amp_a - amp_b,
        better_final=better,  # type: ignore[arg-type]
    )
