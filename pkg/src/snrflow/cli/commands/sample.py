"""Sample command: Euler sampling from a trained checkpoint"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import typer
from pydantic import ValidationError

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import console, tracked_run
from snrflow.config import RunConfig
from snrflow.core.tensor import make_rng
from snrflow.data.models import CheckpointMetadata
from snrflow.errors import ConfigError
from snrflow.flow.matching import SamplerConfig, euler_sample
from snrflow.flow.models import bind
from snrflow.flow.tasks import build_dataset, model_for_params
from snrflow.persist.checkpoint import load_checkpoint, save_checkpoint
from snrflow.utils.images import write_pgm_grid


def _write_points_csv(path: Path, samples: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(samples.shape[1])])
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def sample(
    ctx: typer.Context,
    checkpoint: Path = typer.Argument(..., exists=True, dir_okay=False, help="Checkpoint to sample from"),
    num: int | None = typer.Option(None, "--num", "-n", min=1, help="Number of samples (default: train.eval_images or train.eval_samples)"),
    steps: int | None = typer.Option(None, "--steps", min=1, help="Euler steps (default: sampler.num_steps)"),
) -> None:
    """Draw samples with the Euler sampler and write them to a run directory"""
    with tracked_run(ctx, "sample") as run:
        params, metadata = load_checkpoint(checkpoint)
        config = _training_config(metadata, run.config)
        model = model_for_params(config, params)
        dataset = build_dataset(config)

        z_val, cond_val = dataset.validation_set()
        default_num = config.train.eval_images if dataset.kind == "image" else config.train.eval_samples
        count = num or default_num
        cond = None
        if cond_val is not None:
            if count > cond_val.shape[0]:
                raise ConfigError(f"--num {count} exceeds the {cond_val.shape[0]} validation conditions")
            cond = cond_val[:count]
        # the sampling seed is the one given to this command, not the training seed
        z_init = make_rng(run.config.seed).standard_normal((count,) + z_val.shape[1:])
        sampler = SamplerConfig(num_steps=steps or config.sampler.num_steps)
        samples = euler_sample(bind(model, params), z_init, cond, sampler)

        files = [
            save_checkpoint(
                run.run_dir / "samples.lsr",
                {"samples": samples},
                CheckpointMetadata(stage="samples", iteration=metadata.iteration, config=run.config.to_dict()),
            )
        ]
        if dataset.kind == "image":
            files.append(write_pgm_grid(run.run_dir / "samples.pgm", samples))
        else:
            files.append(run.run_dir / "samples.csv")
            _write_points_csv(files[-1], samples)

        format_report(
            {
                "run_dir": str(run.run_dir),
                "checkpoint": str(checkpoint),
                "shape": list(samples.shape),
                "num_steps": sampler.num_steps,
                "files": [str(f) for f in files],
            },
            "json",
            console,
        )


def _training_config(metadata: CheckpointMetadata, fallback: RunConfig) -> RunConfig:
    """Config stored with the checkpoint, or the resolved config when it has none"""
    if not metadata.config:
        return fallback
    try:
        return RunConfig.model_validate(metadata.config)
    except ValidationError as e:
        raise ConfigError(f"checkpoint carries an invalid config: {e}") from e
