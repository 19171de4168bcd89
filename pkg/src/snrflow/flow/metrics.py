"""Validation metrics for toy runs"""

from __future__ import annotations

import math

import numpy as np

from snrflow.core.tensor import Tensor
from snrflow.errors import ShapeError

PSNR_CAP = 100.0
_CHUNK = 512


def psnr(pred: Tensor, ref: Tensor, data_range: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at PSNR_CAP for identical inputs"""
    if pred.shape != ref.shape:
        raise ShapeError(f"psnr inputs differ: {pred.shape} vs {ref.shape}")
    mse = float(np.mean((pred - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(data_range**2 / mse))


def _mean_pairwise_distance(a: Tensor, b: Tensor) -> float:
    total = 0.0
    for start in range(0, a.shape[0], _CHUNK):
        block = a[start : start + _CHUNK]
        diff = block[:, None, :] - b[None, :, :]
        total += float(np.sqrt(np.sum(diff * diff, axis=-1)).sum())
    return total / (a.shape[0] * b.shape[0])


def energy_distance(x: Tensor, y: Tensor) -> float:
    """Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| between two sample sets (V-statistic)"""
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"energy_distance needs [n, d] and [m, d], got {x.shape}, {y.shape}")
    value = (
        2.0 * _mean_pairwise_distance(x, y)
        - _mean_pairwise_distance(x, x)
        - _mean_pairwise_distance(y, y)
    )
    return max(value, 0.0)
