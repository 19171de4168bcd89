"""Minibatch flow-matching training with periodic evaluation and checkpoints.

Every ``eval_interval`` completed steps the loop appends one point to each metric trace
(mean train loss of the interval plus the validation metrics of the dataset kind) and
keeps a checkpoint. A non-finite loss, gradient or evaluation ends the run: every trace
receives a NaN marker at the failing iteration and ``DivergenceError`` carries the
traces and the last good checkpoint.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import numpy as np

from snrflow.config import TrainSection
from snrflow.core.tensor import Tensor, ensure_finite, make_rng
from snrflow.data.models import CheckpointMetadata, ExpertPartition, MetricTrace
from snrflow.errors import DivergenceError, NonFiniteError
from snrflow.flow.datasets import Dataset
from snrflow.flow.matching import Condition, SamplerConfig, cfm_loss, draw_flow_samples, euler_sample, flow_matching_loss
from snrflow.flow.metrics import energy_distance, psnr
from snrflow.flow.models import FlowModel, bind
from snrflow.flow.optim import Adam, AdamConfig
from snrflow.moe.mixture import ExpertMixture
from snrflow.nn.params import FlatParams, copy_params, count_params
from snrflow.persist.checkpoint import Checkpoint, rng_state_to_json, save_checkpoint
from snrflow.persist.traces import orientation_for

logger = logging.getLogger(__name__)

# evaluation draws come from their own generators so they never disturb training
EVAL_SEED_OFFSET = 1_000_003


class TraceSink(Protocol):
    def append(self, name: str, iteration: int, value: float) -> None: ...


@dataclass
class TrainResult:
    params: FlatParams
    model: FlowModel
    traces: list[MetricTrace]
    checkpoints: list[Checkpoint] = field(default_factory=list)
    iterations: int = 0

    def trace(self, name: str) -> MetricTrace:
        for trace in self.traces:
            if trace.name == name:
                return trace
        raise KeyError(name)


def metric_names(dataset: Dataset) -> list[str]:
    if dataset.kind == "image":
        return ["train_loss", "neg_val_loss", "psnr"]
    return ["train_loss", "neg_val_loss", "energy_distance"]


def train_step(
    model: FlowModel,
    params: FlatParams,
    optimizer: Adam,
    z1: Tensor,
    cond: Condition | None,
    rng: np.random.Generator,
    t: Tensor | None = None,
) -> tuple[FlatParams, float]:
    """One CFM step; ``t`` pins the interpolation times instead of drawing them"""
    sample = draw_flow_samples(z1, rng, t)
    with np.errstate(over="ignore", invalid="ignore"):
        v, cache = model.forward(params, sample.z_t, sample.t, cond)
        loss, d_v = flow_matching_loss(v, sample.target)
        grads = model.backward(params, cache, d_v)
    for name, grad in grads.items():
        ensure_finite(grad, f"gradient of {name}")
    return optimizer.step(params, grads), loss


def evaluate(
    model: FlowModel,
    params: FlatParams,
    dataset: Dataset,
    train_cfg: TrainSection,
    sampler_cfg: SamplerConfig,
    seed: int,
) -> dict[str, float]:
    """Validation metrics; deterministic for fixed parameters and seed"""
    field_fn = bind(model, params)
    z_val, cond_val = dataset.validation_set()
    n = train_cfg.eval_images if dataset.kind == "image" else train_cfg.eval_samples
    z_val = z_val[:n]
    cond_val = None if cond_val is None else cond_val[:n]

    metrics = {"neg_val_loss": -cfm_loss(field_fn, z_val, cond_val, make_rng(seed + EVAL_SEED_OFFSET))}
    z_init = make_rng(seed + EVAL_SEED_OFFSET + 1).standard_normal(z_val.shape)
    samples = euler_sample(field_fn, z_init, cond_val, sampler_cfg)
    if dataset.kind == "image":
        metrics["psnr"] = psnr(samples, z_val)
    else:
        metrics["energy_distance"] = energy_distance(samples, z_val)
    return metrics


def train_loop(
    model: FlowModel,
    params: FlatParams,
    dataset: Dataset,
    optimizer_cfg: AdamConfig,
    *,
    train_cfg: TrainSection | None = None,
    sampler_cfg: SamplerConfig | None = None,
    partition: ExpertPartition | None = None,
    trace_sink: TraceSink | None = None,
    checkpoint_dir: Path | None = None,
    stage: str = "stage1",
    seed: int = 0,
    config_snapshot: dict[str, Any] | None = None,
    on_step: Callable[[int], None] | None = None,
) -> TrainResult:
    """Train ``params`` on ``dataset`` and return final parameters, traces and checkpoints.

    With a partition, the model is wrapped in an ExpertMixture (base-layout parameters
    are expanded to one copy per expert) and every sample updates only the expert that
    serves its time.
    """
    train_cfg = train_cfg or TrainSection()
    sampler_cfg = sampler_cfg or SamplerConfig()
    if partition is not None and not isinstance(model, ExpertMixture):
        model = ExpertMixture(model, partition)
    if isinstance(model, ExpertMixture) and not model.is_expanded(params):
        params = model.expand(params)
    params = copy_params(params)
    logger.info("%s: %d parameters over %d tensors", stage, count_params(params), len(params))

    rng = make_rng(seed)
    optimizer = Adam(optimizer_cfg)
    names = metric_names(dataset)
    traces = [MetricTrace(name=name, orientation=orientation_for(name)) for name in names]
    checkpoints: list[Checkpoint] = []

    def keep_checkpoint(iteration: int, metrics: dict[str, float]) -> None:
        metadata = CheckpointMetadata(
            stage=stage,
            iteration=iteration,
            metrics=metrics,
            rng_state=rng_state_to_json(rng),
            config=config_snapshot or {},
        )
        ckpt = Checkpoint(params=copy_params(params), metadata=metadata)
        if checkpoint_dir is not None:
            ckpt.path = save_checkpoint(checkpoint_dir / f"{stage}-{iteration:06d}.lsr", ckpt.params, metadata)
        checkpoints.append(ckpt)

    def diverge(iteration: int, error: NonFiniteError) -> DivergenceError:
        for trace in traces:
            trace.append(iteration, float("nan"))
            if trace_sink is not None:
                trace_sink.append(trace.name, iteration, float("nan"))
        last = checkpoints[-1] if checkpoints else None
        logger.warning(
            "training diverged at iteration %d (%s); last good checkpoint at %s",
            iteration,
            error,
            last.iteration if last else None,
        )
        return DivergenceError(
            f"training diverged at iteration {iteration}: {error}",
            iteration=iteration,
            traces=traces,
            last_good_checkpoint=last,
        )

    keep_checkpoint(0, {})
    losses: list[float] = []
    for iteration in range(1, train_cfg.iterations + 1):
        z1, cond = dataset.sample_batch(rng, train_cfg.batch_size)
        try:
            params, loss = train_step(model, params, optimizer, z1, cond, rng)
        except NonFiniteError as e:
            raise diverge(iteration, e) from e
        losses.append(loss)

        if iteration % train_cfg.eval_interval == 0:
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    metrics = {"train_loss": float(np.mean(losses))}
                    metrics.update(evaluate(model, params, dataset, train_cfg, sampler_cfg, seed))
                for name, value in metrics.items():
                    ensure_finite(np.asarray(value), name)
            except NonFiniteError as e:
                raise diverge(iteration, e) from e
            losses = []
            for trace in traces:
                trace.append(iteration, metrics[trace.name])
                if trace_sink is not None:
                    trace_sink.append(trace.name, iteration, metrics[trace.name])
            keep_checkpoint(iteration, metrics)
            logger.info(
                "%s iter %d: %s",
                stage,
                iteration,
                ", ".join(f"{name}={value:.5g}" for name, value in metrics.items()),
            )
        if on_step is not None:
            on_step(iteration)

    return TrainResult(
        params=params,
        model=model,
        traces=traces,
        checkpoints=checkpoints,
        iterations=train_cfg.iterations,
    )
