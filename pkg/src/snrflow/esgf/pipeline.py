"""Two-stage guided fine-tuning demo.

Stage 1 trains past the knee of its validation traces. Stage 2 then fine-tunes twice
with a deliberately high learning rate, once from the knee checkpoint and once from the
latest stage-1 checkpoint, and the two resulting validation traces are compared.
A stage-2 run that diverges is part of the outcome, not a failure of the demo.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from contextlib import ExitStack
from dataclasses import dataclass
from pathlib import Path

from snrflow.config import RunConfig
from snrflow.core.tensor import make_rng
from snrflow.data.models import EsgfDemoReport, MetricTrace
from snrflow.errors import DivergenceError
from snrflow.esgf.selection import compare_stability, knee_reports, median_knee, select_finetune_checkpoint
from snrflow.flow.models import FlowModel
from snrflow.flow.tasks import build_dataset, build_model, build_partition
from snrflow.flow.trainer import TrainResult, train_loop
from snrflow.nn.params import FlatParams
from snrflow.persist.checkpoint import Checkpoint
from snrflow.persist.traces import TraceWriter

logger = logging.getLogger(__name__)

STAGE1 = "stage1"
STAGE2_KNEE = "stage2-knee"
STAGE2_LATEST = "stage2-latest"
COMPARE_METRIC = "neg_val_loss"


@dataclass
class EsgfDemoResult:
    report: EsgfDemoReport
    stage1: TrainResult
    stage2_traces: dict[str, list[MetricTrace]]


def validation_traces(traces: list[MetricTrace]) -> list[MetricTrace]:
    return [t for t in traces if t.name != "train_loss"]


def _find(traces: list[MetricTrace], name: str) -> MetricTrace:
    for trace in traces:
        if trace.name == name:
            return trace
    raise KeyError(name)


def _stage_dir(run_dir: Path | None, stage: str) -> Path | None:
    return None if run_dir is None else run_dir / stage


def _fine_tune(
    config: RunConfig,
    model: FlowModel,
    params: FlatParams,
    stage: str,
    run_dir: Path | None,
    on_step: Callable[[int], None] | None,
) -> list[MetricTrace]:
    esgf = config.esgf
    with ExitStack() as stack:
        sink = None
        if run_dir is not None:
            sink = stack.enter_context(TraceWriter(run_dir / f"{stage}-traces.csv"))
        try:
            result = train_loop(
                model,
                params,
                build_dataset(config),
                config.optimizer.model_copy(update={"lr": esgf.stage2_lr}),
                train_cfg=config.train.model_copy(update={"iterations": esgf.stage2_iterations}),
                sampler_cfg=config.sampler,
                trace_sink=sink,
                checkpoint_dir=_stage_dir(run_dir, stage),
                stage=stage,
                seed=config.seed + 1,
                config_snapshot=config.to_dict(),
                on_step=on_step,
            )
        except DivergenceError as e:
            logger.warning("%s diverged at iteration %d", stage, e.iteration)
            return e.traces
    return result.traces


def run_esgf_demo(
    config: RunConfig,
    run_dir: Path | None = None,
    on_step: Callable[[str, int], None] | None = None,
) -> EsgfDemoResult:
    """Stage-1 training, knee selection and the two stage-2 fine-tunes.

    A stage-1 divergence propagates as DivergenceError.
    """
    esgf = config.esgf
    model = build_model(config)
    params = model.init_params(make_rng(config.seed))

    def progress(stage: str) -> Callable[[int], None] | None:
        if on_step is None:
            return None
        return lambda iteration: on_step(stage, iteration)

    with ExitStack() as stack:
        sink = None
        if run_dir is not None:
            sink = stack.enter_context(TraceWriter(run_dir / f"{STAGE1}-traces.csv"))
        stage1 = train_loop(
            model,
            params,
            build_dataset(config),
            config.optimizer,
            train_cfg=config.train.model_copy(update={"iterations": esgf.stage1_iterations}),
            sampler_cfg=config.sampler,
            partition=build_partition(config.moe),
            trace_sink=sink,
            checkpoint_dir=_stage_dir(run_dir, STAGE1),
            stage=STAGE1,
            seed=config.seed,
            config_snapshot=config.to_dict(),
            on_step=progress(STAGE1),
        )

    candidates = validation_traces(stage1.traces)
    reports = knee_reports(candidates, esgf.knee)
    knee_ckpt: Checkpoint = select_finetune_checkpoint(candidates, stage1.checkpoints, esgf.knee)
    latest_ckpt = stage1.checkpoints[-1]
    logger.info(
        "fine-tuning from knee checkpoint %d and latest checkpoint %d",
        knee_ckpt.iteration,
        latest_ckpt.iteration,
    )

    stage2 = {
        STAGE2_KNEE: _fine_tune(config, stage1.model, knee_ckpt.params, STAGE2_KNEE, run_dir, progress(STAGE2_KNEE)),
        STAGE2_LATEST: _fine_tune(
            config, stage1.model, latest_ckpt.params, STAGE2_LATEST, run_dir, progress(STAGE2_LATEST)
        ),
    }
    stability = compare_stability(
        _find(stage2[STAGE2_KNEE], COMPARE_METRIC),
        _find(stage2[STAGE2_LATEST], COMPARE_METRIC),
        window=esgf.window,
    )
    report = EsgfDemoReport(
        metric=COMPARE_METRIC,
        knee_reports=reports,
        median_knee=median_knee(reports),
        knee_checkpoint_iteration=knee_ckpt.iteration,
        latest_checkpoint_iteration=latest_ckpt.iteration,
        stage2_lr=esgf.stage2_lr,
        stage2_iterations=esgf.stage2_iterations,
        stability=stability,
    )
    return EsgfDemoResult(report=report, stage1=stage1, stage2_traces=stage2)
