"""Train command: flow-matching training, optionally routed through an expert mixture"""

from __future__ import annotations

import logging

import typer
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import console, err_console, tracked_run, write_config_snapshot
from snrflow.core.tensor import make_rng
from snrflow.errors import DivergenceError
from snrflow.flow.tasks import build_dataset, build_model, build_partition
from snrflow.flow.trainer import train_loop
from snrflow.moe.partition import emit_routing_table
from snrflow.persist.traces import TraceWriter

logger = logging.getLogger(__name__)


def train(
    ctx: typer.Context,
    iterations: int | None = typer.Option(None, "--iterations", "-n", min=0, help="Training steps (default: train.iterations)"),
    moe: bool | None = typer.Option(None, "--moe/--no-moe", help="Route samples through the expert mixture"),
    lr: float | None = typer.Option(None, "--lr", min=0.0, help="Learning rate (default: optimizer.lr)"),
) -> None:
    """Train a flow-matching model and write traces and checkpoints to a run directory"""
    with tracked_run(ctx, "train") as run:
        config = run.config
        updates = {}
        if iterations is not None:
            updates["train"] = config.train.model_copy(update={"iterations": iterations})
        if moe is not None:
            updates["moe"] = config.moe.model_copy(update={"enabled": moe})
        if lr is not None:
            updates["optimizer"] = config.optimizer.model_copy(update={"lr": lr})
        config = config.model_copy(update=updates)
        write_config_snapshot(run.run_dir, config)

        model = build_model(config)
        dataset = build_dataset(config)
        partition = build_partition(config.moe)
        if partition is not None:
            (run.run_dir / "routing.json").write_text(emit_routing_table(partition, "json"), encoding="utf-8")
        params = model.init_params(make_rng(config.seed))

        with (
            TraceWriter(run.run_dir / "traces.csv") as sink,
            Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                BarColumn(),
                console=err_console,
                transient=True,
            ) as progress,
        ):
            task = progress.add_task("Training...", total=config.train.iterations)
            try:
                result = train_loop(
                    model,
                    params,
                    dataset,
                    config.optimizer,
                    train_cfg=config.train,
                    sampler_cfg=config.sampler,
                    partition=partition,
                    trace_sink=sink,
                    checkpoint_dir=run.run_dir / "checkpoints",
                    seed=config.seed,
                    config_snapshot=config.to_dict(),
                    on_step=lambda _: progress.advance(task),
                )
            except DivergenceError as e:
                last = e.last_good_checkpoint
                format_report(
                    {
                        "run_dir": str(run.run_dir),
                        "status": "diverged",
                        "iteration": e.iteration,
                        "last_good_checkpoint": str(last.path) if last is not None else None,
                    },
                    "json",
                    console,
                )
                raise

        final = {trace.name: trace.values[-1] for trace in result.traces if trace.values}
        format_report(
            {
                "run_dir": str(run.run_dir),
                "status": "completed",
                "iterations": result.iterations,
                "experts": partition.num_experts if partition is not None else 1,
                "final_metrics": final,
                "checkpoints": [str(c.path) for c in result.checkpoints],
            },
            "json",
            console,
        )
