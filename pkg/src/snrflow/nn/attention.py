"""ReLU linear attention.

Single-head kernels take ``q, k, v`` of shape ``[N, d]``. With ``phi = relu`` the
output row i is::

    o_i = phi(q_i) @ KV / (phi(q_i) @ ksum + eps)
    KV   = sum_j phi(k_j)^T v_j        (d x d)
    ksum = sum_j phi(k_j)              (d)

``linear_attention_forward`` builds the two summaries once and then streams the
queries in fixed-size chunks, so no N x N array exists and auxiliary memory does not
grow with N. ``naive_attention_forward`` evaluates the same formula through the
explicit similarity matrix and is the correctness oracle and benchmark baseline.

Multi-head inputs use the ``[N, h, d]`` head layout: model dimension ``h*d`` is split
head-major, so columns ``[i*d, (i+1)*d)`` belong to head i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from snrflow.core.tensor import Tensor, ensure_finite, relu, relu_grad
from snrflow.data.models import AttentionConfig
from snrflow.errors import ShapeError

QUERY_CHUNK = 256


@dataclass(frozen=True)
class AttentionState:
    """Global key/value summary over the processed tokens"""

    kv_summary: Tensor
    k_summary: Tensor
    num_tokens: int


@dataclass
class AttentionParams:
    """Projection weights of one multi-head attention layer (x @ W convention)"""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    b_o: Tensor


def _check_qkv(q: Tensor, k: Tensor, v: Tensor) -> None:
    for name, t in (("q", q), ("k", k), ("v", v)):
        if t.ndim != 2:
            raise ShapeError(f"{name} must be rank 2 [N, d], got shape {t.shape}")
    if q.shape[0] < 1:
        raise ShapeError("attention needs at least one token")
    if k.shape != q.shape or v.shape[0] != q.shape[0]:
        raise ShapeError(f"q/k/v shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    for name, t in (("q", q), ("k", k), ("v", v)):
        ensure_finite(t, name)


def summarize(k: Tensor, v: Tensor, chunk: int = QUERY_CHUNK) -> AttentionState:
    """Key/value summaries accumulated chunk by chunk in ascending token order"""
    kv = np.zeros((k.shape[1], v.shape[1]), dtype=np.result_type(k, v))
    ksum = np.zeros(k.shape[1], dtype=k.dtype)
    for start in range(0, k.shape[0], chunk):
        fk = relu(k[start : start + chunk])
        kv += fk.T @ v[start : start + chunk]
        ksum += fk.sum(axis=0)
    return AttentionState(kv_summary=kv, k_summary=ksum, num_tokens=k.shape[0])


def linear_attention_forward(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig) -> Tensor:
    """O(N) evaluation of ReLU linear attention for one head"""
    _check_qkv(q, k, v)
    state = summarize(k, v)
    eps = q.dtype.type(cfg.epsilon)
    out = np.empty((q.shape[0], v.shape[1]), dtype=np.result_type(q, v))
    for start in range(0, q.shape[0], QUERY_CHUNK):
        fq = relu(q[start : start + QUERY_CHUNK])
        den = fq @ state.k_summary + eps
        out[start : start + QUERY_CHUNK] = (fq @ state.kv_summary) / den[:, None]
    return out


def naive_attention_forward(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig) -> Tensor:
    """O(N^2) evaluation through the explicit similarity matrix"""
    _check_qkv(q, k, v)
    sim = relu(q) @ relu(k).T
    den = sim.sum(axis=1) + q.dtype.type(cfg.epsilon)
    return (sim @ v) / den[:, None]


def linear_attention_vjp(
    q: Tensor, k: Tensor, v: Tensor, upstream_grad: Tensor, cfg: AttentionConfig
) -> tuple[Tensor, Tensor, Tensor]:
    """Reverse-mode gradients (dq, dk, dv) of linear_attention_forward"""
    _check_qkv(q, k, v)
    if upstream_grad.shape != (q.shape[0], v.shape[1]):
        raise ShapeError(
            f"upstream gradient shape {upstream_grad.shape} != output shape {(q.shape[0], v.shape[1])}"
        )
    fq, fk = relu(q), relu(k)
    kv = fk.T @ v
    ksum = fk.sum(axis=0)
    num = fq @ kv
    den = fq @ ksum + cfg.epsilon
    out = num / den[:, None]

    d_num = upstream_grad / den[:, None]
    d_den = -(upstream_grad * out).sum(axis=1) / den
    d_fq = d_num @ kv.T + d_den[:, None] * ksum[None, :]
    d_kv = fq.T @ d_num
    d_ksum = fq.T @ d_den
    d_fk = v @ d_kv.T + d_ksum[None, :]
    dv = fk @ d_kv
    return d_fq * relu_grad(q), d_fk * relu_grad(k), dv


def naive_attention_vjp(
    q: Tensor, k: Tensor, v: Tensor, upstream_grad: Tensor, cfg: AttentionConfig
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of naive_attention_forward, through the N x N similarity matrix"""
    _check_qkv(q, k, v)
    fq, fk = relu(q), relu(k)
    sim = fq @ fk.T
    den = sim.sum(axis=1) + cfg.epsilon
    out = (sim @ v) / den[:, None]

    d_num = upstream_grad / den[:, None]
    d_den = -(upstream_grad * out).sum(axis=1) / den
    d_sim = d_num @ v.T + d_den[:, None]
    dv = sim.T @ d_num
    return (d_sim @ fk) * relu_grad(q), (d_sim.T @ fq) * relu_grad(k), dv


def split_heads(x: Tensor, num_heads: int) -> Tensor:
    """[N, h*d] -> [N, h, d]"""
    n, dim = x.shape
    if dim % num_heads:
        raise ShapeError(f"model dim {dim} is not divisible by {num_heads} heads")
    return x.reshape(n, num_heads, dim // num_heads)


def merge_heads(x: Tensor) -> Tensor:
    """[N, h, d] -> [N, h*d]"""
    n, h, d = x.shape
    return x.reshape(n, h * d)


def multi_head_forward(
    x: Tensor, params: AttentionParams, cfg: AttentionConfig, *, naive: bool = False
) -> tuple[Tensor, dict[str, Tensor]]:
    """Projection, per-head attention, merge and output projection.

    Returns the output together with the intermediates multi_head_vjp needs.
    """
    if x.ndim != 2 or x.shape[1] != cfg.model_dim:
        raise ShapeError(f"expected [N, {cfg.model_dim}] input, got {x.shape}")
    kernel = naive_attention_forward if naive else linear_attention_forward
    q = split_heads(x @ params.w_q, cfg.num_heads)
    k = split_heads(x @ params.w_k, cfg.num_heads)
    v = split_heads(x @ params.w_v, cfg.num_heads)
    heads = np.stack(
        [kernel(q[:, h], k[:, h], v[:, h], cfg) for h in range(cfg.num_heads)], axis=1
    )
    merged = merge_heads(heads)
    out = merged @ params.w_o + params.b_o
    return out, {"x": x, "q": q, "k": k, "v": v, "merged": merged}


def multi_head_wrap(x: Tensor, params: AttentionParams, cfg: AttentionConfig) -> Tensor:
    """Multi-head linear attention over an [N, h*d] token matrix"""
    return multi_head_forward(x, params, cfg)[0]


def multi_head_vjp(
    upstream_grad: Tensor, cache: dict[str, Tensor], params: AttentionParams, cfg: AttentionConfig
) -> tuple[Tensor, AttentionParams]:
    """Gradient w.r.t. the input tokens and every projection weight"""
    x, q, k, v, merged = cache["x"], cache["q"], cache["k"], cache["v"], cache["merged"]
    d_merged = upstream_grad @ params.w_o.T
    grads = AttentionParams(
        w_q=np.zeros_like(params.w_q),
        w_k=np.zeros_like(params.w_k),
        w_v=np.zeros_like(params.w_v),
        w_o=merged.T @ upstream_grad,
        b_o=upstream_grad.sum(axis=0),
    )
    d_heads = split_heads(d_merged, cfg.num_heads)
    dq = np.empty_like(q)
    dk = np.empty_like(k)
    dv = np.empty_like(v)
    for h in range(cfg.num_heads):
        dq[:, h], dk[:, h], dv[:, h] = linear_attention_vjp(
            q[:, h], k[:, h], v[:, h], d_heads[:, h], cfg
        )
    dq, dk, dv = merge_heads(dq), merge_heads(dk), merge_heads(dv)
    grads.w_q = x.T @ dq
    grads.w_k = x.T @ dk
    grads.w_v = x.T @ dv
    dx = dq @ params.w_q.T + dk @ params.w_k.T + dv @ params.w_v.T
    return dx, grads


def init_attention_params(
    rng: np.random.Generator, cfg: AttentionConfig, dtype: np.dtype | type = np.float64
) -> AttentionParams:
    """Scaled-normal projections, zero output bias"""
    dim = cfg.model_dim
    scale = 1.0 / np.sqrt(dim)

    def proj() -> Tensor:
        return (rng.standard_normal((dim, dim)) * scale).astype(dtype)

    return AttentionParams(
        w_q=proj(), w_k=proj(), w_v=proj(), w_o=proj(), b_o=np.zeros(dim, dtype=dtype)
    )
