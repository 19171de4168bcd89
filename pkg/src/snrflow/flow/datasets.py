"""Toy datasets for flow matching runs.

``TwoGaussians`` is the 2-D density toy; ``ToySuperResolution`` pairs small synthetic
images with degraded low-resolution copies for conditional training. Both are fully
determined by their seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np

from snrflow.core.tensor import Tensor, make_rng
from snrflow.flow.matching import Condition, GuidedCondition, toy_degrade, upsample_nearest


class Dataset(Protocol):
    kind: Literal["density", "image"]

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> tuple[Tensor, Condition | None]: ...

    def validation_set(self) -> tuple[Tensor, Condition | None]: ...


@dataclass
class TwoGaussians:
    """Equal mixture of two isotropic Gaussians at (+-separation, 0)"""

    separation: float = 1.5
    std: float = 0.25
    num_val: int = 512
    seed: int = 0
    kind: Literal["density", "image"] = field(default="density", init=False)

    def sample(self, rng: np.random.Generator, n: int) -> Tensor:
        signs = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        centers = np.stack([signs * self.separation, np.zeros(n)], axis=1)
        return centers + self.std * rng.standard_normal((n, 2))

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> tuple[Tensor, None]:
        return self.sample(rng, batch_size), None

    def validation_set(self) -> tuple[Tensor, None]:
        return self.sample(make_rng(self.seed + 7919), self.num_val), None


# grating frequencies and blob centre, each mapped into [-1, 1]
GUIDANCE_DIM = 4


def _synthetic_image(rng: np.random.Generator, height: int, width: int) -> tuple[Tensor, Tensor]:
    """One grating plus one Gaussian blob, scaled into [-1, 1], and its descriptor"""
    yy, xx = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    fy, fx = rng.integers(0, 3, size=2)
    phase = rng.uniform(0.0, 2 * np.pi)
    grating = np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    cy, cx = rng.uniform(0.0, 1.0, size=2)
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.05)
    img = 0.6 * grating + 0.8 * blob - 0.4
    descriptor = np.array([fy - 1.0, fx - 1.0, 2.0 * cy - 1.0, 2.0 * cx - 1.0])
    return np.clip(img, -1.0, 1.0)[None], descriptor


@dataclass
class ToySuperResolution:
    """Synthetic HR images with box-downsampled, noisy LR conditions.

    The LR image is nearest-upsampled by ``factor * cond_upsample`` so that a stem with
    total stride ``cond_upsample`` lands exactly on the HR grid. With ``guidance`` the
    condition is a ``GuidedCondition`` whose vectors describe each image's grating and
    blob.
    """

    height: int = 8
    width: int = 8
    factor: int = 2
    noise_sigma: float = 0.05
    cond_upsample: int = 1
    guidance: bool = False
    num_train: int = 256
    num_val: int = 32
    seed: int = 0
    kind: Literal["density", "image"] = field(default="image", init=False)

    def __post_init__(self) -> None:
        self._train = self._make_pairs(make_rng(self.seed + 104729), self.num_train)
        self._val = self._make_pairs(make_rng(self.seed + 7919), self.num_val)

    def _make_pairs(self, rng: np.random.Generator, n: int) -> tuple[Tensor, Condition]:
        drawn = [_synthetic_image(rng, self.height, self.width) for _ in range(n)]
        hr = np.stack([img for img, _ in drawn])
        lr = np.stack([toy_degrade(img, self.factor, self.noise_sigma, rng) for img in hr])
        x_lr = upsample_nearest(lr, self.factor * self.cond_upsample)
        if self.guidance:
            return hr, GuidedCondition(x_lr, np.stack([d for _, d in drawn]))
        return hr, x_lr

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> tuple[Tensor, Condition]:
        idx = rng.integers(0, self.num_train, size=batch_size)
        return self._train[0][idx], self._train[1][idx]

    def validation_set(self) -> tuple[Tensor, Condition]:
        return self._val
