"""Build the model, dataset and expert partition a RunConfig describes"""

from __future__ import annotations

import math

from snrflow.config import MoeSection, RunConfig
from snrflow.data.models import ExpertPartition
from snrflow.errors import FormatError
from snrflow.flow.datasets import Dataset, ToySuperResolution, TwoGaussians
from snrflow.flow.models import DitField, FlowModel, MlpField
from snrflow.moe.mixture import ExpertMixture
from snrflow.moe.partition import derive_partition, single_expert, uniform_partition
from snrflow.moe.schedule import LogSnrSchedule
from snrflow.nn.params import FlatParams


def build_model(config: RunConfig) -> FlowModel:
    if config.model.task == "toy-sr":
        return DitField(config.model.dit)
    return MlpField(dim=2, hidden=config.model.mlp_hidden, num_layers=config.model.mlp_layers)


def build_dataset(config: RunConfig) -> Dataset:
    data = config.data
    if config.model.task == "toy-sr":
        dit = config.model.dit
        return ToySuperResolution(
            height=dit.height,
            width=dit.width,
            factor=data.sr_factor,
            noise_sigma=data.noise_sigma,
            cond_upsample=math.prod(dit.stem_strides),
            guidance=data.guidance,
            num_train=data.num_train,
            num_val=data.num_val,
            seed=config.seed,
        )
    return TwoGaussians(separation=data.separation, std=data.std, num_val=data.num_val, seed=config.seed)


def build_partition(moe: MoeSection) -> ExpertPartition | None:
    """The partition to train with, or None when the mixture is disabled"""
    if not moe.enabled:
        return None
    schedule = LogSnrSchedule(moe.sigma_min, moe.sigma_max)
    if moe.strategy == "uniform":
        return uniform_partition(2**moe.depth, schedule)
    return derive_partition(schedule, moe.anchor_t, moe.depth)


def model_for_params(config: RunConfig, params: FlatParams) -> FlowModel:
    """The model whose parameter layout matches ``params`` (plain or expert mixture)"""
    model = build_model(config)
    partition = build_partition(config.moe)
    mixture = ExpertMixture(model, partition or single_expert())
    if not mixture.is_expanded(params):
        return model
    if partition is None:
        raise FormatError("parameters hold expert copies but the config enables no expert mixture")
    missing = [k for k in range(partition.num_experts) if not mixture.owned_names(params, k)]
    if missing:
        raise FormatError(f"parameters lack experts {missing} of a {partition.num_experts}-expert partition")
    return mixture
