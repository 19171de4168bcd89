"""Parameter trees.

Parameters are nested dataclasses whose leaves are numpy arrays; lists hold repeated
layers. ``flatten_params`` turns a tree into a flat ``{"a.b.0.c": array}`` mapping
(the form optimizers, checkpoints and expert routing work with) and
``unflatten_params`` rebuilds the tree from a template, keeping non-array fields such
as strides from the template.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import fields, is_dataclass, replace
from typing import Any, TypeVar

import numpy as np

T = TypeVar("T")

FlatParams = dict[str, np.ndarray]


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def _is_tree(value: Any) -> bool:
    return isinstance(value, (np.ndarray, list)) or (is_dataclass(value) and not isinstance(value, type))


def flatten_params(tree: Any, prefix: str = "") -> FlatParams:
    """Flat name -> array view of a parameter tree (arrays are not copied)"""
    if isinstance(tree, np.ndarray):
        return {prefix: tree}
    flat: FlatParams = {}
    if isinstance(tree, list):
        for idx, item in enumerate(tree):
            flat.update(flatten_params(item, _join(prefix, str(idx))))
    elif is_dataclass(tree):
        for f in fields(tree):
            value = getattr(tree, f.name)
            if _is_tree(value):
                flat.update(flatten_params(value, _join(prefix, f.name)))
    return flat


def unflatten_params(template: T, flat: Mapping[str, np.ndarray], prefix: str = "") -> T:
    """Rebuild a tree shaped like ``template`` from a flat mapping"""
    if isinstance(template, np.ndarray):
        return flat[prefix]  # type: ignore[return-value]
    if isinstance(template, list):
        return [  # type: ignore[return-value]
            unflatten_params(item, flat, _join(prefix, str(idx))) for idx, item in enumerate(template)
        ]
    if is_dataclass(template):
        updates = {
            f.name: unflatten_params(getattr(template, f.name), flat, _join(prefix, f.name))
            for f in fields(template)
            if _is_tree(getattr(template, f.name))
        }
        return replace(template, **updates)  # type: ignore[type-var]
    return template


def copy_params(flat: Mapping[str, np.ndarray]) -> FlatParams:
    return {name: np.array(value, copy=True) for name, value in flat.items()}


def count_params(flat: Mapping[str, np.ndarray]) -> int:
    return int(sum(value.size for value in flat.values()))


def with_prefix(flat: Mapping[str, np.ndarray], prefix: str) -> FlatParams:
    return {_join(prefix, name): value for name, value in flat.items()}


def strip_prefix(flat: Mapping[str, np.ndarray], prefix: str) -> FlatParams:
    """Entries under ``prefix.`` with the prefix removed"""
    head = prefix + "."
    return {name[len(head) :]: value for name, value in flat.items() if name.startswith(head)}
