"""Knee-point detection over validation metric traces.

A trace improves, plateaus, then starts to oscillate. The detector works on the
finite prefix of the trace (everything before the first divergence marker), folded so
that higher is better:

1. smooth with a centered moving average of width ``window`` (odd reflection at both
   ends, so linear stretches are reproduced exactly);
2. end the improving prefix at the first window whose smoothed gain falls below
   ``min_gain`` times the gain accumulated so far;
3. normalise the prefix to the unit square and take the point furthest above the chord
   from its first to its last point, breaking ties toward the latest point;
4. report the first window after the prefix whose raw first-difference variance
   exceeds ``osc_var_ratio`` times that of the prefix as the oscillation start.

Every step is invariant to a positive affine rescaling of the values.
"""

from __future__ import annotations

import logging

import numpy as np
import numpy.typing as npt

from snrflow.data.models import KneeConfig, KneeReport, MetricTrace, Orientation
from snrflow.errors import AllFlatError, TooShortError

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
# floor for the reference roughness, relative to the squared total gain
ROUGHNESS_FLOOR = 1e-12


def fold(trace: MetricTrace) -> npt.NDArray[np.float64]:
    """Trace values oriented so that larger is better"""
    values = np.asarray(trace.values, dtype=np.float64)
    return -values if trace.orientation == Orientation.LOWER_BETTER else values


def moving_average(values: npt.NDArray[np.float64], window: int) -> npt.NDArray[np.float64]:
    """Centered moving average of odd width, same length as the input"""
    if window == 1:
        return values.copy()
    half = window // 2
    padded = np.pad(values, half, mode="reflect", reflect_type="odd")
    return np.convolve(padded, np.ones(window) / window, mode="valid")


def improving_prefix_end(smoothed: npt.NDArray[np.float64], window: int, min_gain: float) -> int:
    """Index where the improving prefix ends (the last index when it never flattens)"""
    n = len(smoothed)
    start = smoothed[0]
    for i in range(n - window):
        gained = np.max(smoothed[: i + window + 1]) - start
        if gained > 0 and smoothed[i + window] - smoothed[i] < min_gain * gained:
            return i
    return n - 1


def chord_knee(
    values: npt.NDArray[np.float64], positions: npt.ArrayLike | None = None
) -> int:
    """Index of the point furthest above the first-to-last chord after unit normalisation.

    ``positions`` are the iterations of the points; evenly spaced when omitted.
    """
    n = len(values)
    if n < 3:
        return n - 1
    if positions is None:
        x = np.linspace(0.0, 1.0, n)
    else:
        pos = np.asarray(positions, dtype=np.float64)
        x = (pos - pos[0]) / (pos[-1] - pos[0])
    span = values[-1] - values[0]
    if span <= 0:
        # prefix ends below its start; fall back to its best point
        best = np.max(values)
        return int(np.flatnonzero(values >= best - TIE_TOLERANCE * max(abs(best), 1.0))[-1])
    y = (values - values[0]) / span
    distance = y - x
    best = np.max(distance)
    return int(np.flatnonzero(distance >= best - TIE_TOLERANCE)[-1])


def oscillation_start(
    raw: npt.NDArray[np.float64], prefix_end: int, window: int, ratio: float, gain: float
) -> tuple[int | None, float, float]:
    """First window start after the prefix whose raw roughness exceeds the reference.

    Returns (index or None, reference variance, threshold).
    """
    diffs = np.diff(raw)
    reference = float(np.var(diffs[: max(prefix_end, 1)]))
    threshold = ratio * max(reference, ROUGHNESS_FLOOR * gain * gain)
    for j in range(prefix_end, len(diffs) - window + 1):
        if np.var(diffs[j : j + window]) > threshold:
            return j, reference, threshold
    return None, reference, threshold


def detect_knee(trace: MetricTrace, cfg: KneeConfig | None = None) -> KneeReport:
    """Locate the knee of a metric trace.

    Raises TooShortError when the finite prefix holds fewer than ``3 * window`` points
    and AllFlatError when the smoothed trace never improves.
    """
    cfg = cfg or KneeConfig()
    window = cfg.window
    finite = trace.finite_prefix()
    truncated_at = trace.divergence_iteration
    if len(finite) < 3 * window:
        raise TooShortError(
            f"trace {trace.name!r} has {len(finite)} finite points, need at least {3 * window}"
        )

    raw = fold(finite)
    smoothed = moving_average(raw, window)
    total_gain = float(np.max(smoothed) - smoothed[0])
    spread = float(np.ptp(raw))
    if spread == 0.0 or total_gain <= cfg.min_gain * spread:
        raise AllFlatError(f"trace {trace.name!r} never improves (smoothed gain {total_gain:.3g})")

    end = improving_prefix_end(smoothed, window, cfg.min_gain)
    iterations = finite.iterations
    knee = chord_knee(smoothed[: end + 1], iterations[: end + 1])
    osc, reference, threshold = oscillation_start(raw, end, window, cfg.osc_var_ratio, total_gain)

    display = -smoothed if finite.orientation == Orientation.LOWER_BETTER else smoothed
    report = KneeReport(
        metric=trace.name,
        knee_iteration=iterations[knee],
        phase_boundaries=(iterations[end], None if osc is None else iterations[osc]),
        smoothed_trace=MetricTrace(
            name=finite.name,
            orientation=finite.orientation,
            iterations=list(iterations),
            values=display.tolist(),
        ),
        diagnostics={
            "window": window,
            "min_gain": cfg.min_gain,
            "osc_var_ratio": cfg.osc_var_ratio,
            "total_gain": total_gain,
            "reference_variance": reference,
            "oscillation_threshold": threshold,
            "points_used": len(finite),
            "truncated_at": truncated_at,
        },
    )
    logger.debug(
        "knee of %s at %d (prefix ends %d, oscillation %s)",
        trace.name,
        report.knee_iteration,
        report.improve_end,
        report.oscillation_start,
    )
    return report
