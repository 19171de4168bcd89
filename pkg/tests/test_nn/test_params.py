"""Tests for parameter tree flattening"""

from dataclasses import dataclass, field

import numpy as np

from snrflow.nn.params import (
    copy_params,
    count_params,
    flatten_params,
    strip_prefix,
    unflatten_params,
    with_prefix,
)


@dataclass
class Layer:
    w: np.ndarray
    b: np.ndarray
    stride: int = 2


@dataclass
class Net:
    stem: Layer
    blocks: list[Layer] = field(default_factory=list)


def _net():
    layer = lambda k: Layer(w=np.full((2, 2), float(k)), b=np.full(2, float(k)))  # noqa: E731
    return Net(stem=layer(0), blocks=[layer(1), layer(2)])


def test_flatten_names():
    flat = flatten_params(_net())
    assert sorted(flat) == [
        "blocks.0.b",
        "blocks.0.w",
        "blocks.1.b",
        "blocks.1.w",
        "stem.b",
        "stem.w",
    ]
    assert count_params(flat) == 18


def test_flatten_does_not_copy():
    net = _net()
    flatten_params(net)["stem.w"][0, 0] = 7.0
    assert net.stem.w[0, 0] == 7.0


def test_unflatten_keeps_template_fields():
    net = _net()
    flat = {name: value + 1.0 for name, value in flatten_params(net).items()}
    rebuilt = unflatten_params(net, flat)
    assert rebuilt.blocks[1].stride == 2
    np.testing.assert_array_equal(rebuilt.blocks[1].w, np.full((2, 2), 3.0))
    np.testing.assert_array_equal(net.blocks[1].w, np.full((2, 2), 2.0))


def test_count_params():
    assert count_params(flatten_params(_net())) == 18
    assert count_params({}) == 0


def test_prefix_helpers():
    flat = {"w": np.ones(2), "b": np.zeros(1)}
    prefixed = with_prefix(flat, "expert1")
    assert sorted(prefixed) == ["expert1.b", "expert1.w"]
    mixed = {**prefixed, "expert10.w": np.ones(3), "stem.w": np.ones(1)}
    assert sorted(strip_prefix(mixed, "expert1")) == ["b", "w"]
    assert sorted(with_prefix(flat, "")) == ["b", "w"]


def test_copy_is_deep():
    flat = {"w": np.ones(2)}
    copied = copy_params(flat)
    copied["w"][0] = 5.0
    assert flat["w"][0] == 1.0
