"""Tests for dense tensor helpers"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snrflow.core.tensor import (
    add,
    as_tensor,
    concat,
    dtype_code,
    ensure_finite,
    expand,
    flat_index,
    gelu,
    gelu_grad,
    make_rng,
    matmul,
    mul,
    multi_index,
    random_normal,
    reduce_mean,
    reduce_sum,
    resolve_dtype,
    scale,
    sigmoid,
    silu,
    silu_grad,
    split,
    transpose,
)
from snrflow.errors import NonFiniteError, ShapeError


def test_matmul_matches_triple_loop(rng):
    """Test matmul against an elementwise triple loop"""
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((7, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(a, b), expected, rtol=1e-12, atol=1e-12)


def test_matmul_rejects_bad_shapes(rng):
    """Test that inner dimensions and ranks are checked"""
    with pytest.raises(ShapeError):
        matmul(rng.standard_normal((2, 3)), rng.standard_normal((4, 2)))
    with pytest.raises(ShapeError):
        matmul(rng.standard_normal(3), rng.standard_normal((3, 2)))


def test_matmul_associativity(rng):
    """Test (AB)C against A(BC) on random 8x8 matrices"""
    a, b, c = (rng.standard_normal((8, 8)) for _ in range(3))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.max(np.abs(left - right)) / np.max(np.abs(left)) < 1e-9


def test_reduce_sum_matches_sequential_sum(rng):
    """Test reduce_sum against sequential accumulation"""
    values = rng.standard_normal(1000)
    total = 0.0
    for v in values:
        total += v
    assert reduce_sum(values) == pytest.approx(total, rel=1e-12, abs=1e-12)


def test_add_does_not_broadcast(rng):
    """Test that elementwise ops refuse mismatched shapes"""
    with pytest.raises(ShapeError):
        add(rng.standard_normal((2, 3)), rng.standard_normal(3))
    np.testing.assert_array_equal(add(np.ones(3), 2.0), np.full(3, 3.0))


def test_mul_is_elementwise(rng):
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(mul(a, b), a * b)
    np.testing.assert_array_equal(mul(a, 0.5), a * 0.5)
    with pytest.raises(ShapeError):
        mul(a, b.T)


def test_scale_keeps_dtype():
    a = np.arange(4, dtype=np.float32)
    scaled = scale(a, 0.25)
    assert scaled.dtype == np.float32
    np.testing.assert_array_equal(scaled, np.array([0.0, 0.25, 0.5, 0.75], dtype=np.float32))


def test_reduce_mean_over_axes():
    a = np.arange(6, dtype=np.float64).reshape(2, 3)
    assert reduce_mean(a) == 2.5
    np.testing.assert_array_equal(reduce_mean(a, axis=0), [1.5, 2.5, 3.5])
    np.testing.assert_array_equal(reduce_mean(a, axis=1), [1.0, 4.0])
    assert reduce_mean(a.astype(np.float32)).dtype == np.float32


def test_random_normal_scale_and_dtype():
    draw = random_normal(make_rng(5), (3, 4), "f32", scale=2.0)
    assert draw.shape == (3, 4)
    assert draw.dtype == np.float32
    expected = (make_rng(5).standard_normal((3, 4)) * 2.0).astype(np.float32)
    np.testing.assert_array_equal(draw, expected)


def test_as_tensor_validates():
    """Test as_tensor rejects empty extents and non-finite values, and freezes"""
    with pytest.raises(ShapeError):
        as_tensor(np.zeros((0, 3)))
    with pytest.raises(NonFiniteError):
        as_tensor([1.0, float("nan")])
    frozen = as_tensor([1.0, 2.0])
    assert not frozen.flags.writeable
    assert frozen.dtype == np.float64
    loose = as_tensor([float("inf")], "f32", check_finite=False, frozen=False)
    assert loose.dtype == np.float32
    assert loose.flags.writeable


def test_resolve_dtype():
    """Test dtype codes map to the two supported float types"""
    assert resolve_dtype("f32") == np.float32
    assert resolve_dtype(np.float64) == np.float64
    assert dtype_code(np.zeros(1, dtype=np.float32)) == "f32"
    with pytest.raises(ValueError):
        resolve_dtype("f16")
    with pytest.raises(ValueError):
        resolve_dtype(np.int32)


def test_ensure_finite_counts_bad_entries():
    """Test the error message names the number of non-finite entries"""
    ensure_finite(np.ones(4))
    with pytest.raises(NonFiniteError, match="2 non-finite"):
        ensure_finite(np.array([1.0, np.inf, np.nan]), "weights")


def test_make_rng_is_reproducible():
    """Test that equal seeds give equal draws"""
    np.testing.assert_array_equal(make_rng(7).standard_normal(5), make_rng(7).standard_normal(5))
    assert not np.array_equal(make_rng(7).standard_normal(5), make_rng(8).standard_normal(5))


@given(st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=4), st.data())
def test_flat_index_inverts_multi_index(shape, data):
    """Test row-major offsets and multi-indices are inverse"""
    size = int(np.prod(shape))
    offset = data.draw(st.integers(min_value=0, max_value=size - 1))
    assert flat_index(multi_index(offset, shape), shape) == offset


def test_concat_split_and_transpose(rng):
    """Test concat/split inverse and axis reversal"""
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((5, 3, 4))
    joined = concat(a, b, axis=0)
    head, tail = split(joined, 2, axis=0)
    np.testing.assert_array_equal(head, a)
    np.testing.assert_array_equal(tail, b)
    with pytest.raises(ShapeError):
        concat(a, rng.standard_normal((2, 4, 4)), axis=0)
    with pytest.raises(ShapeError):
        split(a, 2, axis=0)
    assert transpose(a).shape == (4, 3, 2)


def test_expand_repeats_leading_axes(rng):
    """Test expand adds leading axes without changing the data"""
    a = rng.standard_normal((2, 3))
    out = expand(a, (4,))
    assert out.shape == (4, 2, 3)
    np.testing.assert_array_equal(out[3], a)


def test_sigmoid_is_stable_at_extremes():
    """Test sigmoid saturates without overflow"""
    with np.errstate(over="raise"):
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


@pytest.mark.parametrize("fn,grad", [(gelu, gelu_grad), (silu, silu_grad)])
def test_activation_gradients(fn, grad, rng):
    """Test activation derivatives against central differences"""
    x = rng.standard_normal(50) * 3
    h = 1e-6
    numeric = (fn(x + h) - fn(x - h)) / (2 * h)
    np.testing.assert_allclose(grad(x), numeric, rtol=1e-6, atol=1e-8)
