"""Conditional flow matching on the straight-line path.

Flow time runs from the prior to the data::

    z_t    = (1 - t) * z0 + t * z1        z0 ~ N(0, I)
    target = z1 - z0                      (independent of t)
    loss   = mean_b || target_b - v(z_t, t, c)_b ||^2

so t=0 is the pure-noise end. The routing axis of the expert partition runs the other
way; see ``snrflow.moe.partition.flow_time_to_routing_time``.

Samples are handled in batches: arrays carry a leading batch axis and ``t`` is a vector
with one time per sample.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from snrflow.core.tensor import Tensor, ensure_finite
from snrflow.errors import NonFiniteError, ShapeError


@dataclass(frozen=True)
class GuidedCondition:
    """A low-resolution image batch paired with one guidance vector per sample.

    Slices like an array along the batch axis, so trainers and the expert mixture can
    pass it wherever a plain condition batch goes.
    """

    x_lr: Tensor  # [B, C_lr, H_lr, W_lr]
    cond_vec: Tensor  # [B, cond_dim]

    def __post_init__(self) -> None:
        if self.cond_vec.ndim != 2 or self.cond_vec.shape[0] != self.x_lr.shape[0]:
            raise ShapeError(
                f"cond_vec {self.cond_vec.shape} does not pair with x_lr {self.x_lr.shape}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.x_lr.shape

    def __len__(self) -> int:
        return self.x_lr.shape[0]

    def __getitem__(self, index: Any) -> GuidedCondition:
        return GuidedCondition(self.x_lr[index], self.cond_vec[index])


Condition = Tensor | GuidedCondition

# v = field(z [B, ...], t [B], cond [B, ...] | None)
VectorField = Callable[[Tensor, Tensor, "Condition | None"], Tensor]


class SamplerConfig(BaseModel):
    """Euler sampler over a uniform grid from t=0 to t=1"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_steps: int = Field(20, ge=1)


@dataclass(frozen=True)
class FlowSample:
    z0: Tensor
    z1: Tensor
    t: Tensor
    z_t: Tensor
    target: Tensor


def _broadcast_t(t: Tensor, ndim: int) -> Tensor:
    return t.reshape((-1,) + (1,) * (ndim - 1))


def interpolate(z0: Tensor, z1: Tensor, t: Tensor) -> Tensor:
    """(1 - t) z0 + t z1; exact at both endpoints"""
    tb = _broadcast_t(t, z0.ndim)
    return (1.0 - tb) * z0 + tb * z1


def draw_flow_samples(
    z1: Tensor, rng: np.random.Generator, t: Tensor | None = None
) -> FlowSample:
    """Pair a data batch with prior draws and interpolation times.

    Draw order is fixed (prior first, then times) so a seeded generator reproduces the
    same sample.
    """
    if z1.ndim < 2 or z1.shape[0] < 1:
        raise ShapeError(f"expected a non-empty batch [B, ...], got shape {z1.shape}")
    z0 = rng.standard_normal(z1.shape).astype(z1.dtype)
    if t is None:
        t = rng.uniform(0.0, 1.0, size=z1.shape[0])
    t = np.asarray(t, dtype=z1.dtype)
    if t.shape != (z1.shape[0],):
        raise ShapeError(f"need one time per sample, got t of shape {t.shape}")
    return FlowSample(z0=z0, z1=z1, t=t, z_t=interpolate(z0, z1, t), target=z1 - z0)


def flow_matching_loss(velocity_pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Batch-mean squared error and its gradient with respect to ``velocity_pred``"""
    if velocity_pred.shape != target.shape:
        raise ShapeError(f"prediction {velocity_pred.shape} and target {target.shape} differ")
    residual = velocity_pred - target
    batch = residual.shape[0]
    loss = float(np.sum(residual * residual) / batch)
    if not np.isfinite(loss):
        raise NonFiniteError(f"flow matching loss is {loss}")
    return loss, (2.0 / batch) * residual


def cfm_loss(
    field: VectorField, z1: Tensor, cond: Condition | None, rng: np.random.Generator
) -> float:
    """Conditional flow matching loss of one batch with t ~ Uniform[0, 1]"""
    sample = draw_flow_samples(z1, rng)
    return flow_matching_loss(field(sample.z_t, sample.t, cond), sample.target)[0]


def euler_sample(
    field: VectorField,
    z_init: Tensor,
    cond: Condition | None = None,
    cfg: SamplerConfig | None = None,
) -> Tensor:
    """Integrate dz/dt = v(z, t, c) from t=0 to t=1 with forward Euler steps.

    The iterate is kept as ``z_init + t_k * mean(v_0 .. v_k-1)``, which is the Euler
    iterate on the grid ``t_k = k / num_steps``. A constant field u therefore ends on
    ``z_init + u`` exactly.
    """
    cfg = cfg or SamplerConfig()
    n = cfg.num_steps
    start = np.array(z_init, dtype=np.result_type(z_init, np.float32), copy=True)
    z = start
    mean_v = np.zeros_like(start)
    batch = z.shape[0]
    for step in range(n):
        t = np.full(batch, step / n, dtype=z.dtype)
        v = field(z, t, cond)
        ensure_finite(v, f"vector field at step {step}")
        mean_v = mean_v + (v - mean_v) / (step + 1)
        z = start + ((step + 1) / n) * mean_v
    return z


def toy_degrade(
    hr: Tensor, factor: int, noise_sigma: float = 0.0, rng: np.random.Generator | None = None
) -> Tensor:
    """Box-downsample a [C, H, W] image by ``factor`` and add seeded Gaussian noise"""
    if hr.ndim != 3:
        raise ShapeError(f"toy_degrade expects [C, H, W], got {hr.shape}")
    channels, height, width = hr.shape
    if factor < 1 or height % factor or width % factor:
        raise ShapeError(f"factor {factor} does not divide {height}x{width}")
    low = hr.reshape(channels, height // factor, factor, width // factor, factor).mean(axis=(2, 4))
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 needs a seeded generator")
        low = low + noise_sigma * rng.standard_normal(low.shape)
    return low.astype(hr.dtype)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of the trailing two axes"""
    if factor == 1:
        return x
    return np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1)
