"""Expert partitions of the routing time axis and the deterministic router.

The SNR strategy bisects the effective log-SNR range hierarchically: the anchor splits
it into a high-noise and a low-noise zone, and every further level splits each
sub-interval at its log-SNR midpoint. Boundaries are mapped back to time with
``inv_log_snr``. Experts are numbered from the noisiest (t near 1) to the cleanest.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Literal

import numpy as np
import numpy.typing as npt

from snrflow.data.models import ExpertPartition, RouteDecision, RoutingRow, RoutingTable
from snrflow.errors import DomainError
from snrflow.moe.schedule import LogSnrSchedule, inv_log_snr, log_snr

DEFAULT_ANCHOR_T = 0.875

TASK_LABELS = {
    1: ["Full Trajectory"],
    2: ["High-Noise Zone", "Low-Noise Zone"],
    4: ["Initial Denoising", "Coarse Structure", "Texture Generation", "Detail Refinement"],
}

CSV_COLUMNS = ["expert", "label", "lambda_low", "lambda_high", "t_low", "t_high"]


def _bisect(low: float, high: float, levels: int) -> list[float]:
    """Ascending interior midpoints of ``levels`` rounds of bisection"""
    if levels == 0:
        return []
    mid = (low + high) / 2.0
    return _bisect(low, mid, levels - 1) + [mid] + _bisect(mid, high, levels - 1)


def _labels(num_experts: int) -> list[str]:
    return TASK_LABELS.get(num_experts, [f"Expert {k + 1}" for k in range(num_experts)])


def derive_partition(
    schedule: LogSnrSchedule, anchor_t: float = DEFAULT_ANCHOR_T, depth: int = 2
) -> ExpertPartition:
    """Hierarchical log-SNR partition into 2**depth experts"""
    if depth < 0:
        raise DomainError(f"depth must be >= 0, got {depth}")
    if not 0.0 < anchor_t < 1.0:
        raise DomainError(f"anchor_t must lie in (0, 1), got {anchor_t}")
    lam_anchor = log_snr(anchor_t)
    lam_min, lam_max = schedule.lambda_min, schedule.lambda_max
    if not lam_min < lam_anchor < lam_max:
        raise DomainError(
            f"anchor lambda {lam_anchor:.4f} (t={anchor_t}) outside effective range "
            f"[{lam_min:.4f}, {lam_max:.4f}]"
        )
    if depth == 0:
        return ExpertPartition(
            num_experts=1,
            strategy="single",
            anchor_t=anchor_t,
            lambda_min=lam_min,
            lambda_max=lam_max,
            labels=_labels(1),
        )

    lambdas = _bisect(lam_min, lam_anchor, depth - 1) + [lam_anchor] + _bisect(lam_anchor, lam_max, depth - 1)
    times = [inv_log_snr(lam) for lam in lambdas]
    # the anchor boundary is the anchor time itself, not its round trip
    times[lambdas.index(lam_anchor)] = anchor_t
    num_experts = 2**depth
    return ExpertPartition(
        num_experts=num_experts,
        strategy="snr",
        lambda_boundaries=lambdas,
        t_boundaries=times,
        anchor_t=anchor_t,
        lambda_min=lam_min,
        lambda_max=lam_max,
        labels=_labels(num_experts),
    )


def uniform_partition(num_experts: int, schedule: LogSnrSchedule | None = None) -> ExpertPartition:
    """Equal-width time intervals, the naive baseline to the SNR partition"""
    if num_experts < 1:
        raise DomainError(f"num_experts must be >= 1, got {num_experts}")
    times = [1.0 - k / num_experts for k in range(1, num_experts)]
    return ExpertPartition(
        num_experts=num_experts,
        strategy="uniform" if num_experts > 1 else "single",
        lambda_boundaries=[log_snr(t) for t in times],
        t_boundaries=times,
        lambda_min=schedule.lambda_min if schedule else None,
        lambda_max=schedule.lambda_max if schedule else None,
        labels=[f"Expert {k + 1}" for k in range(num_experts)],
    )


def single_expert() -> ExpertPartition:
    return ExpertPartition(num_experts=1, strategy="single", labels=_labels(1))


def flow_time_to_routing_time(t: float | npt.NDArray[np.floating]):  # type: ignore[no-untyped-def]
    """Flow time (t=0 noise) to routing time (t=1 noise)"""
    return 1.0 - t


def expert_index(t: float, partition: ExpertPartition) -> int:
    """Number of boundaries strictly above t; a boundary value goes to the noisier expert"""
    return sum(1 for boundary in partition.t_boundaries if boundary > t)


def route_many(t: npt.NDArray[np.floating], partition: ExpertPartition) -> npt.NDArray[np.int64]:
    """Vectorised expert_index over routing times"""
    bounds = np.asarray(partition.t_boundaries, dtype=np.float64)
    return np.sum(bounds[None, :] > np.asarray(t, dtype=np.float64)[:, None], axis=1).astype(np.int64)


def route(t: float, partition: ExpertPartition) -> RouteDecision:
    """The single expert serving routing time t in [0, 1]"""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"routing time must lie in [0, 1], got {t}")
    if t == 0.0:
        lam = math.inf
    elif t == 1.0:
        lam = -math.inf
    else:
        lam = log_snr(t)
    return RouteDecision(expert_index=expert_index(t, partition), t=t, log_snr=lam)


def routing_table(partition: ExpertPartition) -> RoutingTable:
    rows = []
    for k in range(partition.num_experts):
        lam_low, lam_high = partition.lambda_interval(k)
        t_low, t_high = partition.t_interval(k)
        rows.append(
            RoutingRow(
                expert_index=k,
                label=partition.label(k),
                lambda_low=lam_low,
                lambda_high=lam_high,
                t_low=t_low,
                t_high=t_high,
            )
        )
    return RoutingTable(
        strategy=partition.strategy,
        num_experts=partition.num_experts,
        lambda_min=partition.lambda_min,
        lambda_max=partition.lambda_max,
        lambda_anchor=log_snr(partition.anchor_t) if partition.anchor_t is not None else None,
        lambda_boundaries=list(partition.lambda_boundaries),
        t_boundaries=list(partition.t_boundaries),
        rows=rows,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def emit_routing_table(partition: ExpertPartition, fmt: Literal["csv", "json"] = "json") -> str:
    """Render the boundary table; floats keep their full repr so parsing is exact"""
    table = routing_table(partition)
    if fmt == "json":
        return json.dumps(table.model_dump(mode="json"), indent=2)
    if fmt != "csv":
        raise ValueError(f"Unsupported format: {fmt}. Must be one of: csv, json")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table.rows:
        writer.writerow(
            [
                row.expert_index,
                row.label,
                _fmt(row.lambda_low),
                _fmt(row.lambda_high),
                _fmt(row.t_low),
                _fmt(row.t_high),
            ]
        )
    return buf.getvalue()


def parse_routing_table(text: str, fmt: Literal["csv", "json"] = "json") -> RoutingTable:
    if fmt == "json":
        return RoutingTable.model_validate_json(text)
    rows = [
        RoutingRow(
            expert_index=int(rec["expert"]),
            label=rec["label"],
            lambda_low=float(rec["lambda_low"]),
            lambda_high=float(rec["lambda_high"]),
            t_low=float(rec["t_low"]),
            t_high=float(rec["t_high"]),
        )
        for rec in csv.DictReader(io.StringIO(text))
    ]
    return RoutingTable(
        strategy="csv",
        num_experts=len(rows),
        lambda_boundaries=[row.lambda_high for row in rows[:-1]],
        t_boundaries=[row.t_low for row in rows[:-1]],
        rows=rows,
    )
