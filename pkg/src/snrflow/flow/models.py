"""Vector-field networks trained by flow matching.

Models are stateless: parameters live in a flat ``{name: array}`` mapping that the
optimizer, the checkpoint format and the expert mixture all operate on. A model
builds initial parameters, evaluates a batch with ``forward`` (returning a cache) and
turns an upstream gradient into parameter gradients with ``backward``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Protocol, runtime_checkable

import numpy as np

from snrflow.core.tensor import Tensor, silu, silu_grad
from snrflow.errors import ShapeError
from snrflow.flow.matching import Condition, GuidedCondition, VectorField
from snrflow.nn.dit import DitConfig, DitParams, dit_forward_cached, dit_vjp, init_dit_params
from snrflow.nn.params import FlatParams, flatten_params, unflatten_params


@runtime_checkable
class FlowModel(Protocol):
    """What the trainer, the sampler and the expert mixture need from a network"""

    # parameter names under these prefixes are shared between experts
    shared_prefixes: tuple[str, ...]

    def init_params(self, rng: np.random.Generator) -> FlatParams: ...

    def predict(self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None) -> Tensor: ...

    def forward(
        self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None
    ) -> tuple[Tensor, Any]: ...

    def backward(self, params: FlatParams, cache: Any, upstream: Tensor) -> FlatParams: ...


def bind(model: FlowModel, params: FlatParams) -> VectorField:
    """Close a model over fixed parameters"""

    def field(z: Tensor, t: Tensor, cond: Condition | None) -> Tensor:
        return model.predict(params, z, t, cond)

    return field


def is_shared(name: str, shared_prefixes: tuple[str, ...]) -> bool:
    return any(name == p or name.startswith(p + ".") for p in shared_prefixes)


def accumulate(total: FlatParams, grads: FlatParams) -> None:
    for name, value in grads.items():
        if name in total:
            total[name] = total[name] + value
        else:
            total[name] = value


@dataclass
class DenseParams:
    w: Tensor
    b: Tensor


@dataclass
class MlpParams:
    layers: list[DenseParams]


class MlpField:
    """Small MLP over (z, t) for low-dimensional density toys; SiLU between layers"""

    shared_prefixes: tuple[str, ...] = ()

    def __init__(self, dim: int = 2, hidden: int = 64, num_layers: int = 3):
        if num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        self.dim = dim
        self.hidden = hidden
        self.num_layers = num_layers

    def init_params(self, rng: np.random.Generator) -> FlatParams:
        sizes = [self.dim + 1] + [self.hidden] * (self.num_layers - 1) + [self.dim]
        layers = [
            DenseParams(w=rng.standard_normal((n_in, n_out)) / math.sqrt(n_in), b=np.zeros(n_out))
            for n_in, n_out in zip(sizes, sizes[1:])
        ]
        return flatten_params(MlpParams(layers=layers))

    def _layers(self, params: FlatParams) -> list[tuple[Tensor, Tensor]]:
        return [(params[f"layers.{i}.w"], params[f"layers.{i}.b"]) for i in range(self.num_layers)]

    def forward(
        self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None
    ) -> tuple[Tensor, tuple[list[Tensor], list[Tensor]]]:
        if z_t.ndim != 2 or z_t.shape[1] != self.dim or t.shape != (z_t.shape[0],):
            raise ShapeError(f"expected z_t [B, {self.dim}] and t [B], got {z_t.shape}, {t.shape}")
        h = np.concatenate([z_t, t[:, None].astype(z_t.dtype)], axis=1)
        inputs, pres = [], []
        layers = self._layers(params)
        for idx, (w, b) in enumerate(layers):
            inputs.append(h)
            pre = h @ w + b
            pres.append(pre)
            h = silu(pre) if idx < len(layers) - 1 else pre
        return h, (inputs, pres)

    def predict(self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None) -> Tensor:
        return self.forward(params, z_t, t, cond)[0]

    def backward(
        self, params: FlatParams, cache: tuple[list[Tensor], list[Tensor]], upstream: Tensor
    ) -> FlatParams:
        inputs, pres = cache
        grads: FlatParams = {}
        g = upstream
        layers = self._layers(params)
        for idx in range(len(layers) - 1, -1, -1):
            if idx < len(layers) - 1:
                g = g * silu_grad(pres[idx])
            grads[f"layers.{idx}.w"] = inputs[idx].T @ g
            grads[f"layers.{idx}.b"] = g.sum(axis=0)
            g = g @ layers[idx][0].T
        return grads


class DitField:
    """DiT vector field conditioned on a low-resolution image.

    ``cond`` is the batch of low-resolution inputs ``[B, C_lr, H_lr, W_lr]``, or a
    ``GuidedCondition`` that also carries the guidance vectors ``[B, cond_dim]``. The
    conditioning stem parameters (prefix ``stem``) are shared between experts.
    Samples are evaluated one at a time.
    """

    shared_prefixes: tuple[str, ...] = ("stem",)

    def __init__(self, cfg: DitConfig):
        self.cfg = cfg
        # structure only (strides, layer counts); values come from the flat mapping
        self._template: DitParams = init_dit_params(np.random.default_rng(0), cfg)

    def init_params(self, rng: np.random.Generator) -> FlatParams:
        return flatten_params(init_dit_params(rng, self.cfg))

    def _tree(self, params: FlatParams) -> DitParams:
        return unflatten_params(self._template, params)

    def forward(
        self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None
    ) -> tuple[Tensor, tuple[DitParams, list[dict[str, Any]]]]:
        if cond is None:
            raise ShapeError("DitField needs the low-resolution batch as cond")
        if z_t.shape[0] != cond.shape[0] or t.shape != (z_t.shape[0],):
            raise ShapeError(f"batch sizes disagree: z_t {z_t.shape}, t {t.shape}, cond {cond.shape}")
        if isinstance(cond, GuidedCondition):
            x_lr, cond_vec = cond.x_lr, cond.cond_vec
        else:
            x_lr, cond_vec = cond, None
        tree = self._tree(params)
        outputs, caches = [], []
        for b in range(z_t.shape[0]):
            guidance = None if cond_vec is None else cond_vec[b]
            out, cache = dit_forward_cached(z_t[b], float(t[b]), guidance, x_lr[b], tree, self.cfg)
            outputs.append(out)
            caches.append(cache)
        return np.stack(outputs), (tree, caches)

    def predict(self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None) -> Tensor:
        return self.forward(params, z_t, t, cond)[0]

    def backward(
        self, params: FlatParams, cache: tuple[DitParams, list[dict[str, Any]]], upstream: Tensor
    ) -> FlatParams:
        tree, caches = cache
        total: FlatParams = {}
        for b, sample_cache in enumerate(caches):
            grads, _ = dit_vjp(upstream[b], sample_cache, tree, self.cfg)
            accumulate(total, flatten_params(grads))
        return total
