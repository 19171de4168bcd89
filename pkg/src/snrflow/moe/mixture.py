"""Timestep mixture of experts over any flow model.

Each expert holds its own copy of every parameter of the base model except the names
under ``base.shared_prefixes`` (the conditioning stem of the DiT field), which exist
once. Mixture parameters are named ``expert{k}.<name>`` for expert-owned entries and
``<name>`` for shared ones. Every sample is served by exactly one expert, chosen from
its flow time through the partition; gradients are produced only for the experts that
served at least one sample, plus the shared entries.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np

from snrflow.core.tensor import Tensor
from snrflow.data.models import ExpertPartition
from snrflow.errors import ShapeError
from snrflow.flow.matching import Condition
from snrflow.flow.models import FlowModel, accumulate, is_shared
from snrflow.moe.partition import flow_time_to_routing_time, route_many
from snrflow.nn.params import FlatParams, copy_params, strip_prefix, with_prefix

logger = logging.getLogger(__name__)


def expert_prefix(k: int) -> str:
    return f"expert{k}"


class ExpertMixture:
    def __init__(self, base: FlowModel, partition: ExpertPartition):
        self.base = base
        self.partition = partition
        self.shared_prefixes = base.shared_prefixes

    @property
    def num_experts(self) -> int:
        return self.partition.num_experts

    def expand(self, base_params: FlatParams) -> FlatParams:
        """Mixture parameters with every expert starting from ``base_params``"""
        shared = {name: value for name, value in base_params.items() if is_shared(name, self.shared_prefixes)}
        params = copy_params(shared)
        per_expert = {name: value for name, value in base_params.items() if name not in shared}
        for k in range(self.num_experts):
            params.update(with_prefix(copy_params(per_expert), expert_prefix(k)))
        return params

    def is_expanded(self, params: FlatParams) -> bool:
        head = expert_prefix(0) + "."
        return any(name.startswith(head) for name in params)

    def init_params(self, rng: np.random.Generator) -> FlatParams:
        return self.expand(self.base.init_params(rng))

    def expert_params(self, params: FlatParams, k: int) -> FlatParams:
        """Base-layout view of expert k (its own entries plus the shared ones)"""
        view = {name: value for name, value in params.items() if is_shared(name, self.shared_prefixes)}
        view.update(strip_prefix(params, expert_prefix(k)))
        return view

    def owned_names(self, params: FlatParams, k: int) -> list[str]:
        head = expert_prefix(k) + "."
        return [name for name in params if name.startswith(head)]

    def assign(self, t: Tensor) -> np.ndarray:
        """Expert index of every sample from its flow time"""
        return route_many(flow_time_to_routing_time(np.asarray(t, dtype=np.float64)), self.partition)

    def forward(
        self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None
    ) -> tuple[Tensor, list[tuple[int, np.ndarray, Any]]]:
        experts = self.assign(t)
        out: Tensor | None = None
        caches = []
        for k in np.unique(experts):
            mask = experts == k
            part, cache = self.base.forward(
                self.expert_params(params, int(k)),
                z_t[mask],
                t[mask],
                None if cond is None else cond[mask],
            )
            if out is None:
                out = np.empty((z_t.shape[0],) + part.shape[1:], dtype=part.dtype)
            out[mask] = part
            caches.append((int(k), mask, cache))
        if out is None:
            raise ShapeError("cannot route an empty batch")
        logger.debug("routed batch of %d to experts %s", z_t.shape[0], np.unique(experts).tolist())
        return out, caches

    def predict(self, params: FlatParams, z_t: Tensor, t: Tensor, cond: Condition | None) -> Tensor:
        return self.forward(params, z_t, t, cond)[0]

    def backward(
        self, params: FlatParams, cache: list[tuple[int, np.ndarray, Any]], upstream: Tensor
    ) -> FlatParams:
        """Gradients for the experts that served a sample plus the shared entries"""
        grads: FlatParams = {}
        for k, mask, base_cache in cache:
            base_grads = self.base.backward(self.expert_params(params, k), base_cache, upstream[mask])
            for name, value in base_grads.items():
                if is_shared(name, self.shared_prefixes):
                    accumulate(grads, {name: value})
                else:
                    grads[f"{expert_prefix(k)}.{name}"] = value
        return grads
