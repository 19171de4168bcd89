"""Central finite-difference oracle for the hand-written backward passes."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
# gradients smaller than this are compared absolutely
ABS_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    max_rel_error: float = 0.0
    worst_entry: tuple[str, int] | None = None
    checked: int = 0
    errors: dict[str, float] = field(default_factory=dict)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: float, numeric: float, floor: float = ABS_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(
    objective: Callable[[Mapping[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    *,
    step: float = DEFAULT_STEP,
    samples_per_tensor: int | None = 8,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare analytic gradients against central differences of a scalar objective.

    ``params`` must be float64 and mutable; entries are perturbed in place and restored.
    With ``samples_per_tensor`` set, that many entries per tensor are drawn at random
    (all entries of small tensors); None checks every entry.
    """
    rng = rng or np.random.default_rng(0)
    result = GradCheckResult()
    for name, value in params.items():
        if name not in grads:
            raise KeyError(f"no analytic gradient for parameter {name!r}")
        flat = value.reshape(-1)
        grad = grads[name].reshape(-1)
        if samples_per_tensor is None or flat.size <= samples_per_tensor:
            indices = np.arange(flat.size)
        else:
            indices = rng.choice(flat.size, size=samples_per_tensor, replace=False)
        worst = 0.0
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + step
            plus = objective(params)
            flat[idx] = original - step
            minus = objective(params)
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * step)
            err = relative_error(float(grad[idx]), numeric)
            result.checked += 1
            if err > worst:
                worst = err
            if err > result.max_rel_error:
                result.max_rel_error = err
                result.worst_entry = (name, int(idx))
        result.errors[name] = worst
    logger.debug(
        "gradient check: %d entries, max relative error %.3e at %s",
        result.checked,
        result.max_rel_error,
        result.worst_entry,
    )
    return result
