"""Diffusion transformer backbone with linear attention and an LR conditioning stem.

One forward pass of the vector-field network::

    z'     = inject_condition(z_t, cond_stem(x_lr))        [C + C_s, H, W]
    h      = tokens(z') @ embed_w + embed_b                [N, D]
    temb   = timestep_embed(t, D) + cond_vec @ cond_w      [D]
    block:   x1 = h + (temb @ t_w + t_b)
             x2 = x1 + attention(LN(x1))
             h  = x2 + mix_ffn(LN(x2))
    v      = LN(h) @ head_w + head_b  -> [C, H, W]

Tokens are the spatial positions of the latent grid in row-major order. Parameters are
split into the conditioning stem and the backbone; the expert mixture copies the
backbone per expert and shares the stem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from snrflow.core.tensor import Tensor, split
from snrflow.data.models import AttentionConfig
from snrflow.errors import ShapeError
from snrflow.nn.attention import (
    AttentionParams,
    init_attention_params,
    multi_head_forward,
    multi_head_vjp,
)
from snrflow.nn.blocks import (
    CondStemParams,
    MixFfnParams,
    cond_stem_backward,
    cond_stem_forward,
    init_cond_stem,
    init_mix_ffn,
    inject_condition,
    layer_norm_backward,
    layer_norm_forward,
    mix_ffn_backward,
    mix_ffn_forward,
    timestep_embed,
)


class DitConfig(BaseModel):
    """Shapes of the DiT vector-field network"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: int = Field(1, ge=1)
    height: int = Field(8, ge=1)
    width: int = Field(8, ge=1)
    cond_channels: int = Field(1, ge=1)
    stem_channels: int = Field(4, ge=1)
    stem_strides: tuple[int, ...] = (1, 1, 1)
    cond_dim: int = Field(4, ge=1)
    num_blocks: int = Field(2, ge=1)
    num_heads: int = Field(2, ge=1)
    head_dim: int = Field(8, ge=1)
    ffn_expand: int = Field(2, ge=1)
    epsilon: float = Field(1e-6, gt=0.0)

    @field_validator("stem_strides")
    @classmethod
    def _positive_strides(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value or any(s < 1 for s in value):
            raise ValueError("stem_strides needs at least one positive stride")
        return value

    @property
    def model_dim(self) -> int:
        return self.num_heads * self.head_dim

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(num_heads=self.num_heads, head_dim=self.head_dim, epsilon=self.epsilon)

    @property
    def lr_size(self) -> tuple[int, int]:
        """Spatial size of x_lr that the stem maps onto the latent grid"""
        factor = math.prod(self.stem_strides)
        return self.height * factor, self.width * factor


@dataclass
class DitBlockParams:
    t_w: Tensor  # [D, D] timestep shift
    t_b: Tensor
    norm1_g: Tensor
    norm1_b: Tensor
    attn: AttentionParams
    norm2_g: Tensor
    norm2_b: Tensor
    ffn: MixFfnParams


@dataclass
class BackboneParams:
    embed_w: Tensor  # [C + C_s, D]
    embed_b: Tensor
    cond_w: Tensor  # [cond_dim, D]
    blocks: list[DitBlockParams]
    final_g: Tensor
    final_b: Tensor
    head_w: Tensor  # [D, C]
    head_b: Tensor


@dataclass
class DitParams:
    stem: CondStemParams
    backbone: BackboneParams


def _check_inputs(z_t: Tensor, x_lr: Tensor, cond_vec: Tensor, cfg: DitConfig) -> None:
    if z_t.shape != (cfg.channels, cfg.height, cfg.width):
        raise ShapeError(f"z_t must be {(cfg.channels, cfg.height, cfg.width)}, got {z_t.shape}")
    expected_lr = (cfg.cond_channels, *cfg.lr_size)
    if x_lr.shape != expected_lr:
        raise ShapeError(f"x_lr must be {expected_lr}, got {x_lr.shape}")
    if cond_vec.shape != (cfg.cond_dim,):
        raise ShapeError(f"cond_vec must have shape ({cfg.cond_dim},), got {cond_vec.shape}")


def dit_block_forward(
    x: Tensor, t_emb: Tensor, params: DitBlockParams, cfg: DitConfig
) -> tuple[Tensor, dict[str, Any]]:
    x1 = x + (t_emb @ params.t_w + params.t_b)
    a, ln1 = layer_norm_forward(x1, params.norm1_g, params.norm1_b)
    attn_out, attn_cache = multi_head_forward(a, params.attn, cfg.attention)
    x2 = x1 + attn_out
    m, ln2 = layer_norm_forward(x2, params.norm2_g, params.norm2_b)
    ffn_out, ffn_cache = mix_ffn_forward(m, params.ffn, cfg.height, cfg.width)
    cache = {"ln1": ln1, "attn": attn_cache, "ln2": ln2, "ffn": ffn_cache}
    return x2 + ffn_out, cache


def dit_block(x: Tensor, t_emb: Tensor, params: DitBlockParams, cfg: DitConfig) -> Tensor:
    """One transformer block over an [N, D] token matrix"""
    return dit_block_forward(x, t_emb, params, cfg)[0]


def dit_block_backward(
    grad: Tensor, t_emb: Tensor, cache: dict[str, Any], params: DitBlockParams, cfg: DitConfig
) -> tuple[Tensor, Tensor, DitBlockParams]:
    """Returns (dx, dt_emb, parameter grads)"""
    d_m, d_ffn = mix_ffn_backward(grad, cache["ffn"], params.ffn)
    d_x2_ln, d_g2, d_b2 = layer_norm_backward(d_m, cache["ln2"], params.norm2_g)
    d_x2 = grad + d_x2_ln
    d_a, d_attn = multi_head_vjp(d_x2, cache["attn"], params.attn, cfg.attention)
    d_x1_ln, d_g1, d_b1 = layer_norm_backward(d_a, cache["ln1"], params.norm1_g)
    d_x1 = d_x2 + d_x1_ln
    d_shift = d_x1.sum(axis=0)
    grads = DitBlockParams(
        t_w=np.outer(t_emb, d_shift),
        t_b=d_shift,
        norm1_g=d_g1,
        norm1_b=d_b1,
        attn=d_attn,
        norm2_g=d_g2,
        norm2_b=d_b2,
        ffn=d_ffn,
    )
    return d_x1, params.t_w @ d_shift, grads


def dit_forward_cached(
    z_t: Tensor,
    t: float,
    cond_vec: Tensor | None,
    x_lr: Tensor,
    params: DitParams,
    cfg: DitConfig,
) -> tuple[Tensor, dict[str, Any]]:
    if cond_vec is None:
        cond_vec = np.zeros(cfg.cond_dim, dtype=z_t.dtype)
    _check_inputs(z_t, x_lr, cond_vec, cfg)
    bb = params.backbone
    stem_out, stem_caches = cond_stem_forward(x_lr, params.stem, (cfg.height, cfg.width))
    joined = inject_condition(z_t, stem_out)
    n = cfg.height * cfg.width
    tokens = joined.reshape(joined.shape[0], n).T
    t_emb = timestep_embed(t, cfg.model_dim) + cond_vec @ bb.cond_w
    h = tokens @ bb.embed_w + bb.embed_b
    block_caches = []
    for block in bb.blocks:
        h, block_cache = dit_block_forward(h, t_emb, block, cfg)
        block_caches.append(block_cache)
    hn, final_ln = layer_norm_forward(h, bb.final_g, bb.final_b)
    out_tokens = hn @ bb.head_w + bb.head_b
    cache = {
        "stem": stem_caches,
        "tokens": tokens,
        "cond_vec": cond_vec,
        "t_emb": t_emb,
        "blocks": block_caches,
        "final_ln": final_ln,
        "hn": hn,
    }
    return out_tokens.T.reshape(cfg.channels, cfg.height, cfg.width), cache


def dit_forward(
    z_t: Tensor,
    t: float,
    cond_vec: Tensor | None,
    x_lr: Tensor,
    params: DitParams,
    cfg: DitConfig,
) -> Tensor:
    """Predicted vector field v(z_t, t, c); same shape as z_t.

    ``cond_vec`` is the opaque guidance vector; None means no guidance (zeros).
    """
    return dit_forward_cached(z_t, t, cond_vec, x_lr, params, cfg)[0]


def dit_vjp(
    upstream_grad: Tensor, cache: dict[str, Any], params: DitParams, cfg: DitConfig
) -> tuple[DitParams, dict[str, Tensor]]:
    """Parameter gradients plus input gradients for ``z_t``, ``x_lr`` and ``cond_vec``"""
    if upstream_grad.shape != (cfg.channels, cfg.height, cfg.width):
        raise ShapeError(f"upstream gradient shape {upstream_grad.shape} != output shape")
    bb = params.backbone
    n = cfg.height * cfg.width
    g = upstream_grad.reshape(cfg.channels, n).T
    d_head_w = cache["hn"].T @ g
    d_head_b = g.sum(axis=0)
    d_h, d_final_g, d_final_b = layer_norm_backward(g @ bb.head_w.T, cache["final_ln"], bb.final_g)

    t_emb = cache["t_emb"]
    d_t_emb = np.zeros_like(t_emb)
    block_grads: list[DitBlockParams] = []
    for block, block_cache in zip(reversed(bb.blocks), reversed(cache["blocks"])):
        d_h, d_temb_part, grads = dit_block_backward(d_h, t_emb, block_cache, block, cfg)
        d_t_emb += d_temb_part
        block_grads.append(grads)

    tokens = cache["tokens"]
    d_tokens = d_h @ bb.embed_w.T
    d_joined = d_tokens.T.reshape(tokens.shape[1], cfg.height, cfg.width)
    d_z, d_stem_out = split(d_joined, cfg.channels, axis=0)
    d_x_lr, d_stem = cond_stem_backward(d_stem_out, cache["stem"], params.stem)

    grads = DitParams(
        stem=d_stem,
        backbone=BackboneParams(
            embed_w=tokens.T @ d_h,
            embed_b=d_h.sum(axis=0),
            cond_w=np.outer(cache["cond_vec"], d_t_emb),
            blocks=block_grads[::-1],
            final_g=d_final_g,
            final_b=d_final_b,
            head_w=d_head_w,
            head_b=d_head_b,
        ),
    )
    inputs = {"z_t": d_z, "x_lr": d_x_lr, "cond_vec": bb.cond_w @ d_t_emb}
    return grads, inputs


def init_dit_params(rng: np.random.Generator, cfg: DitConfig) -> DitParams:
    """Scaled-normal weights, unit norm gains, zero biases"""
    dim = cfg.model_dim
    stem = init_cond_stem(rng, cfg.cond_channels, cfg.stem_channels, cfg.stem_strides)
    in_dim = cfg.channels + cfg.stem_channels

    blocks = []
    for _ in range(cfg.num_blocks):
        blocks.append(
            DitBlockParams(
                t_w=rng.standard_normal((dim, dim)) * (0.1 / math.sqrt(dim)),
                t_b=np.zeros(dim),
                norm1_g=np.ones(dim),
                norm1_b=np.zeros(dim),
                attn=init_attention_params(rng, cfg.attention),
                norm2_g=np.ones(dim),
                norm2_b=np.zeros(dim),
                ffn=init_mix_ffn(rng, dim, cfg.ffn_expand),
            )
        )
    backbone = BackboneParams(
        embed_w=rng.standard_normal((in_dim, dim)) / math.sqrt(in_dim),
        embed_b=np.zeros(dim),
        cond_w=rng.standard_normal((cfg.cond_dim, dim)) / math.sqrt(cfg.cond_dim),
        blocks=blocks,
        final_g=np.ones(dim),
        final_b=np.zeros(dim),
        head_w=rng.standard_normal((dim, cfg.channels)) / math.sqrt(dim),
        head_b=np.zeros(cfg.channels),
    )
    return DitParams(stem=stem, backbone=backbone)
