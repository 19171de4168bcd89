"""Building blocks around the attention kernel.

Each differentiable block comes as a ``*_forward`` returning ``(output, cache)`` and a
``*_backward`` consuming the cache, in the style of hand-written autograd functions.
Spatial tensors are ``[C, H, W]``; token matrices are ``[N, C]`` with tokens in
row-major grid order (token index ``h * W + w``). All convolutions are
cross-correlations with zero padding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from snrflow.core.tensor import Tensor, concat, gelu, gelu_grad, silu, silu_grad
from snrflow.errors import DomainError, ShapeError

LAYER_NORM_EPS = 1e-6
TIMESTEP_SCALE = 1000.0
MAX_PERIOD = 10000.0


@dataclass
class ConvParams:
    """One strided 3x3 convolution of the conditioning stem"""

    weight: Tensor  # [C_out, C_in, 3, 3]
    bias: Tensor  # [C_out]
    stride: int = 1


@dataclass
class CondStemParams:
    """Strided convolutional encoder for the low-resolution input"""

    layers: list[ConvParams] = field(default_factory=list)

    @property
    def downsample(self) -> int:
        return math.prod(layer.stride for layer in self.layers)

    @property
    def out_channels(self) -> int:
        return int(self.layers[-1].weight.shape[0])


@dataclass
class MixFfnParams:
    """Expand projection, per-channel 3x3 depthwise conv, contract projection"""

    w_in: Tensor  # [C, E]
    b_in: Tensor  # [E]
    dw_kernel: Tensor  # [E, 3, 3], one filter per channel
    dw_bias: Tensor  # [E]
    w_out: Tensor  # [E, C]
    b_out: Tensor  # [C]


# -- depthwise convolution ---------------------------------------------------------


def _check_depthwise(x: Tensor, kernel: Tensor) -> None:
    if x.ndim != 3:
        raise ShapeError(f"depthwise conv expects [C, H, W], got {x.shape}")
    if kernel.shape != (x.shape[0], 3, 3):
        raise ShapeError(f"depthwise kernel must be [{x.shape[0]}, 3, 3], got {kernel.shape}")


def depthwise_conv3x3(x: Tensor, kernel: Tensor) -> Tensor:
    """Same-size 3x3 depthwise convolution; channel c only sees input channel c"""
    return depthwise_forward(x, kernel)[0]


def depthwise_forward(x: Tensor, kernel: Tensor) -> tuple[Tensor, Tensor]:
    _check_depthwise(x, kernel)
    _, height, width = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros_like(x, dtype=np.result_type(x, kernel))
    for a in range(3):
        for b in range(3):
            out += kernel[:, a, b, None, None] * xp[:, a : a + height, b : b + width]
    return out, xp


def depthwise_backward(grad: Tensor, xp: Tensor, kernel: Tensor) -> tuple[Tensor, Tensor]:
    """Gradients (dx, dkernel) of depthwise_forward"""
    _, height, width = grad.shape
    d_kernel = np.zeros_like(kernel)
    d_xp = np.zeros_like(xp)
    for a in range(3):
        for b in range(3):
            window = xp[:, a : a + height, b : b + width]
            d_kernel[:, a, b] = (grad * window).sum(axis=(1, 2))
            d_xp[:, a : a + height, b : b + width] += kernel[:, a, b, None, None] * grad
    return d_xp[:, 1:-1, 1:-1], d_kernel


# -- strided convolution (im2col) --------------------------------------------------


def conv2d_forward(
    x: Tensor, weight: Tensor, bias: Tensor, stride: int, padding: int = 1
) -> tuple[Tensor, dict[str, Any]]:
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d shapes disagree: input {x.shape}, weight {weight.shape}")
    c_in, height, width = x.shape
    c_out, _, k, _ = weight.shape
    if height % stride or width % stride:
        raise ShapeError(f"stride {stride} does not divide spatial dims {height}x{width}")
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    h_out = (height + 2 * padding - k) // stride + 1
    w_out = (width + 2 * padding - k) // stride + 1
    cols = np.empty((c_in, k, k, h_out, w_out), dtype=np.result_type(x, weight))
    for a in range(k):
        for b in range(k):
            cols[:, a, b] = xp[:, a : a + stride * h_out : stride, b : b + stride * w_out : stride]
    cols2d = cols.reshape(c_in * k * k, h_out * w_out)
    out = weight.reshape(c_out, -1) @ cols2d + bias[:, None]
    cache = {"cols2d": cols2d, "xp_shape": xp.shape, "stride": stride, "padding": padding}
    return out.reshape(c_out, h_out, w_out), cache


def conv2d_backward(
    grad: Tensor, cache: dict[str, Any], weight: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients (dx, dweight, dbias) of conv2d_forward"""
    c_out, h_out, w_out = grad.shape
    _, c_in, k, _ = weight.shape
    stride, padding = cache["stride"], cache["padding"]
    g2d = grad.reshape(c_out, -1)
    d_weight = (g2d @ cache["cols2d"].T).reshape(weight.shape)
    d_bias = g2d.sum(axis=1)
    d_cols = (weight.reshape(c_out, -1).T @ g2d).reshape(c_in, k, k, h_out, w_out)
    d_xp = np.zeros(cache["xp_shape"], dtype=grad.dtype)
    for a in range(k):
        for b in range(k):
            d_xp[:, a : a + stride * h_out : stride, b : b + stride * w_out : stride] += d_cols[:, a, b]
    _, hp, wp = d_xp.shape
    return d_xp[:, padding : hp - padding, padding : wp - padding], d_weight, d_bias


# -- conditioning stem -------------------------------------------------------------


def cond_stem_forward(
    x_lr: Tensor, params: CondStemParams, target_hw: tuple[int, int] | None = None
) -> tuple[Tensor, list[dict[str, Any]]]:
    """SiLU between the strided convolutions; the last convolution stays linear"""
    h = x_lr
    caches: list[dict[str, Any]] = []
    last = len(params.layers) - 1
    for idx, layer in enumerate(params.layers):
        pre, cache = conv2d_forward(h, layer.weight, layer.bias, layer.stride)
        cache["pre"] = pre
        caches.append(cache)
        h = silu(pre) if idx < last else pre
    if target_hw is not None and tuple(h.shape[1:]) != tuple(target_hw):
        raise ShapeError(
            f"stem output {h.shape[1]}x{h.shape[2]} does not match latent {target_hw[0]}x{target_hw[1]}"
        )
    return h, caches


def cond_stem(
    x_lr: Tensor, params: CondStemParams, target_hw: tuple[int, int] | None = None
) -> Tensor:
    return cond_stem_forward(x_lr, params, target_hw)[0]


def cond_stem_backward(
    grad: Tensor, caches: list[dict[str, Any]], params: CondStemParams
) -> tuple[Tensor, CondStemParams]:
    last = len(params.layers) - 1
    grads: list[ConvParams] = []
    g = grad
    for idx in range(last, -1, -1):
        layer, cache = params.layers[idx], caches[idx]
        if idx < last:
            g = g * silu_grad(cache["pre"])
        g, d_weight, d_bias = conv2d_backward(g, cache, layer.weight)
        grads.append(ConvParams(weight=d_weight, bias=d_bias, stride=layer.stride))
    return g, CondStemParams(layers=grads[::-1])


def inject_condition(z_t: Tensor, stem_out: Tensor) -> Tensor:
    """Channel concatenation with the noisy input first"""
    if z_t.ndim != 3 or stem_out.ndim != 3:
        raise ShapeError("inject_condition expects two [C, H, W] tensors")
    if z_t.shape[1:] != stem_out.shape[1:]:
        raise ShapeError(f"spatial dims differ: {z_t.shape[1:]} vs {stem_out.shape[1:]}")
    return concat(z_t, stem_out, axis=0)


# -- Mix-FFN -----------------------------------------------------------------------


def mix_ffn_forward(
    x: Tensor, params: MixFfnParams, height: int, width: int
) -> tuple[Tensor, dict[str, Any]]:
    n, _ = x.shape
    if n != height * width:
        raise ShapeError(f"{n} tokens do not form a {height}x{width} grid")
    expanded = x @ params.w_in + params.b_in
    grid = expanded.T.reshape(-1, height, width)
    conv, xp = depthwise_forward(grid, params.dw_kernel)
    pre = conv + params.dw_bias[:, None, None]
    act_tokens = gelu(pre).reshape(pre.shape[0], n).T
    out = act_tokens @ params.w_out + params.b_out
    return out, {"x": x, "xp": xp, "pre": pre, "act_tokens": act_tokens}


def mix_ffn(x: Tensor, params: MixFfnParams, height: int, width: int) -> Tensor:
    """Token-wise Mix-FFN; the residual connection is added by the caller"""
    return mix_ffn_forward(x, params, height, width)[0]


def mix_ffn_backward(
    grad: Tensor, cache: dict[str, Any], params: MixFfnParams
) -> tuple[Tensor, MixFfnParams]:
    x, pre, act_tokens = cache["x"], cache["pre"], cache["act_tokens"]
    n = x.shape[0]
    d_act_tokens = grad @ params.w_out.T
    d_pre = d_act_tokens.T.reshape(pre.shape) * gelu_grad(pre)
    d_grid, d_kernel = depthwise_backward(d_pre, cache["xp"], params.dw_kernel)
    d_expanded = d_grid.reshape(pre.shape[0], n).T
    grads = MixFfnParams(
        w_in=x.T @ d_expanded,
        b_in=d_expanded.sum(axis=0),
        dw_kernel=d_kernel,
        dw_bias=d_pre.sum(axis=(1, 2)),
        w_out=act_tokens.T @ grad,
        b_out=grad.sum(axis=0),
    )
    return d_expanded @ params.w_in.T, grads


# -- normalisation and embeddings --------------------------------------------------


def layer_norm_forward(x: Tensor, gain: Tensor, bias: Tensor) -> tuple[Tensor, dict[str, Tensor]]:
    mean = x.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.var(axis=1, keepdims=True) + LAYER_NORM_EPS)
    x_hat = (x - mean) * inv_std
    return x_hat * gain + bias, {"x_hat": x_hat, "inv_std": inv_std}


def layer_norm_backward(
    grad: Tensor, cache: dict[str, Tensor], gain: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    x_hat, inv_std = cache["x_hat"], cache["inv_std"]
    dim = x_hat.shape[1]
    d_hat = grad * gain
    dx = (
        inv_std
        / dim
        * (
            dim * d_hat
            - d_hat.sum(axis=1, keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=1, keepdims=True)
        )
    )
    return dx, (grad * x_hat).sum(axis=0), grad.sum(axis=0)


def timestep_embed(t: float, dim: int) -> Tensor:
    """Sinusoidal embedding of a flow time in [0, 1]: cosines then sines"""
    if not 0.0 <= t <= 1.0 or math.isnan(t):
        raise DomainError(f"timestep {t} outside [0, 1]")
    half = dim // 2
    freqs = np.exp(-math.log(MAX_PERIOD) * np.arange(half, dtype=np.float64) / max(half, 1))
    args = TIMESTEP_SCALE * t * freqs
    emb = np.concatenate([np.cos(args), np.sin(args)])
    if dim % 2:
        emb = np.concatenate([emb, np.zeros(1)])
    return emb


# -- initialisation ----------------------------------------------------------------


def _normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> Tensor:
    return rng.standard_normal(shape) * (gain / math.sqrt(fan_in))


def init_cond_stem(
    rng: np.random.Generator, in_channels: int, channels: int, strides: tuple[int, ...]
) -> CondStemParams:
    layers = []
    c_in = in_channels
    for stride in strides:
        layers.append(
            ConvParams(
                weight=_normal(rng, (channels, c_in, 3, 3), c_in * 9),
                bias=np.zeros(channels),
                stride=stride,
            )
        )
        c_in = channels
    return CondStemParams(layers=layers)


def init_mix_ffn(rng: np.random.Generator, dim: int, expand: int) -> MixFfnParams:
    hidden = dim * expand
    return MixFfnParams(
        w_in=_normal(rng, (dim, hidden), dim),
        b_in=np.zeros(hidden),
        dw_kernel=_normal(rng, (hidden, 3, 3), 9),
        dw_bias=np.zeros(hidden),
        w_out=_normal(rng, (hidden, dim), hidden),
        b_out=np.zeros(dim),
    )
