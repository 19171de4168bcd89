"""Dense tensor helpers.

A tensor is a ``numpy.ndarray`` of dtype float32 or float64 in C (row-major) order.
``as_tensor`` validates and freezes arrays; the remaining functions are the small set
of shape-checked operations the rest of the package relies on. No broadcasting is
performed except between a tensor and a Python scalar, and ``expand`` is the explicit
way to repeat a tensor along new leading axes.

Random initialisation always goes through ``make_rng`` which builds a numpy
``Generator`` on the counter-based Philox 4x64 bit generator, so every seeded draw is
reproducible across platforms.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

import numpy as np
import numpy.typing as npt

from snrflow.errors import NonFiniteError, ShapeError

Tensor = npt.NDArray[np.floating]
DType = Literal["f32", "f64"]

DTYPES: dict[str, type[np.floating]] = {"f32": np.float32, "f64": np.float64}


def resolve_dtype(dtype: DType | np.dtype | type) -> np.dtype:
    """Map a dtype code or numpy dtype to one of the two supported float dtypes"""
    if isinstance(dtype, str):
        if dtype not in DTYPES:
            raise ValueError(f"Unsupported dtype code: {dtype}. Must be one of: f32, f64")
        return np.dtype(DTYPES[dtype])
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported dtype: {resolved}")
    return resolved


def dtype_code(array: np.ndarray) -> DType:
    """Inverse of resolve_dtype for supported arrays"""
    if array.dtype == np.float64:
        return "f64"
    if array.dtype == np.float32:
        return "f32"
    raise ValueError(f"Unsupported dtype: {array.dtype}")


def as_tensor(
    data: npt.ArrayLike,
    dtype: DType | np.dtype | type = "f64",
    *,
    check_finite: bool = True,
    frozen: bool = True,
) -> Tensor:
    """Build a validated, C-contiguous tensor.

    Raises ShapeError for zero-size extents and NonFiniteError for NaN/Inf input when
    ``check_finite`` is set. Frozen tensors are read-only views; callers that need a
    mutable buffer should pass ``frozen=False`` or copy.
    """
    array = np.array(data, dtype=resolve_dtype(dtype), order="C", copy=True)
    if any(extent < 1 for extent in array.shape):
        raise ShapeError(f"All extents must be >= 1, got shape {array.shape}")
    if check_finite:
        ensure_finite(array)
    if frozen:
        array.setflags(write=False)
    return array


def ensure_finite(array: np.ndarray, what: str = "tensor") -> None:
    """Raise NonFiniteError if the array holds any NaN or Inf.

    NaN and Inf propagate through a sum, so the common all-finite case costs one
    reduction and no temporary array.
    """
    if np.isfinite(np.sum(array)):
        return
    bad = int(np.count_nonzero(~np.isfinite(array)))
    if bad:
        raise NonFiniteError(f"{what} contains {bad} non-finite value(s)")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox-backed generator"""
    return np.random.Generator(np.random.Philox(seed))


def random_normal(
    rng: np.random.Generator, shape: Sequence[int], dtype: DType = "f64", scale: float = 1.0
) -> Tensor:
    """Standard normal draw scaled by ``scale``"""
    return (rng.standard_normal(tuple(shape)) * scale).astype(resolve_dtype(dtype))


def flat_index(index: Sequence[int], shape: Sequence[int]) -> int:
    """Row-major flat offset of a multi-index"""
    return int(np.ravel_multi_index(tuple(index), tuple(shape)))


def multi_index(offset: int, shape: Sequence[int]) -> tuple[int, ...]:
    """Multi-index of a row-major flat offset"""
    return tuple(int(i) for i in np.unravel_index(offset, tuple(shape)))


def _require_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m×k and a k×n tensor"""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def add(a: Tensor, b: Tensor | float) -> Tensor:
    if isinstance(b, np.ndarray):
        _require_same_shape(a, b, "add")
    return a + b


def mul(a: Tensor, b: Tensor | float) -> Tensor:
    if isinstance(b, np.ndarray):
        _require_same_shape(a, b, "mul")
    return a * b


def scale(a: Tensor, factor: float) -> Tensor:
    return a * a.dtype.type(factor)


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum in float64 accumulation for f64 input, pairwise as numpy does"""
    return np.sum(a, axis=axis, dtype=a.dtype)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    return np.mean(a, axis=axis, dtype=a.dtype)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Axis permutation; defaults to reversing the axes"""
    return np.ascontiguousarray(np.transpose(a, axes))


def expand(a: Tensor, leading: Sequence[int]) -> Tensor:
    """Repeat ``a`` along new leading axes of the given extents"""
    return np.ascontiguousarray(np.broadcast_to(a, tuple(leading) + a.shape))


def concat(a: Tensor, b: Tensor, axis: int) -> Tensor:
    """Concatenate two tensors whose extents agree on every other axis"""
    if a.ndim != b.ndim:
        raise ShapeError(f"concat rank mismatch: {a.ndim} vs {b.ndim}")
    axis = axis % a.ndim
    for ax, (ea, eb) in enumerate(zip(a.shape, b.shape)):
        if ax != axis and ea != eb:
            raise ShapeError(f"concat extents disagree on axis {ax}: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=axis)


def split(a: Tensor, first: int, axis: int) -> tuple[Tensor, Tensor]:
    """Inverse of concat: the first ``first`` entries along ``axis`` and the rest"""
    axis = axis % a.ndim
    if not 0 < first < a.shape[axis]:
        raise ShapeError(f"split point {first} outside (0, {a.shape[axis]}) on axis {axis}")
    head, tail = np.split(a, [first], axis=axis)
    return np.ascontiguousarray(head), np.ascontiguousarray(tail)


def relu(a: Tensor) -> Tensor:
    return np.maximum(a, a.dtype.type(0))


def relu_grad(a: Tensor) -> Tensor:
    """Subgradient of relu, pinned to 0 at exactly 0"""
    return (a > 0).astype(a.dtype)


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so neither branch overflows exp
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ex = np.exp(a[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(a: Tensor) -> Tensor:
    return a * sigmoid(a)


def silu_grad(a: Tensor) -> Tensor:
    s = sigmoid(a)
    return s * (1.0 + a * (1.0 - s))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximated GELU"""
    inner = _GELU_C * (a + 0.044715 * a**3)
    return 0.5 * a * (1.0 + np.tanh(inner))


def gelu_grad(a: Tensor) -> Tensor:
    inner = _GELU_C * (a + 0.044715 * a**3)
    th = np.tanh(inner)
    d_inner = _GELU_C * (1.0 + 3 * 0.044715 * a**2)
    return 0.5 * (1.0 + th) + 0.5 * a * (1.0 - th**2) * d_inner
