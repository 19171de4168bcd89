"""Bench command: attention timing sweep and scaling fits"""

from __future__ import annotations

import logging

import typer
from pydantic import ValidationError
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import console, err_console, tracked_run
from snrflow.config import BenchSection, format_validation_error
from snrflow.data.models import BenchPoint, BenchSummary
from snrflow.errors import ConfigError, InsufficientDataError
from snrflow.bench.harness import baseline_seconds, fit_scaling, points_to_csv, run_cells

logger = logging.getLogger(__name__)


def bench(
    ctx: typer.Context,
    impl: list[str] | None = typer.Option(None, "--impl", help="linear, naive or noop; repeatable (default: bench.impls)"),
    n: list[int] | None = typer.Option(None, "--n", help="Sequence length; repeatable, ascending (default: bench.n_list)"),
    d: int | None = typer.Option(None, "--d", help="Head dimension (default: bench.d)"),
    heads: int | None = typer.Option(None, "--heads", help="Number of heads (default: bench.heads)"),
    reps: int | None = typer.Option(None, "--reps", help="Timed repetitions per cell, at least 5 (default: bench.reps)"),
    warmup: int | None = typer.Option(None, "--warmup", help="Untimed warmup calls per cell (default: bench.warmup)"),
    dtype: str | None = typer.Option(None, "--dtype", help="f32 or f64 (default: bench.dtype)"),
    backward: bool | None = typer.Option(None, "--backward/--forward-only", help="Also time the VJP"),
    parallel: bool | None = typer.Option(None, "--parallel/--serial", help="Time cells concurrently in a thread pool"),
    format: str | None = typer.Option(None, "--format", "-f", help="Output format: json, table (default: output.format)"),
) -> None:
    """Time linear and naive attention across sequence lengths and fit log-log exponents"""
    with tracked_run(ctx, "bench") as run:
        overrides = {
            "impls": impl,
            "n_list": n,
            "d": d,
            "heads": heads,
            "reps": reps,
            "warmup": warmup,
            "dtype": dtype,
            "backward": backward,
            "parallel": parallel,
        }
        try:
            cfg = BenchSection.model_validate(
                {**run.config.bench.model_dump(), **{k: v for k, v in overrides.items() if v is not None}}
            )
        except ValidationError as e:
            raise ConfigError(format_validation_error(e)) from e

        cells = len(cfg.impls) * len(cfg.n_list)
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            console=err_console,
            transient=True,
        ) as progress:
            task = progress.add_task(f"Timing {cells} cells...", total=cells)

            def advance(point: BenchPoint) -> None:
                progress.advance(task)
                if not point.ok:
                    err_console.print(f"[yellow]{point.impl} N={point.n_tokens}: {point.error}[/yellow]")

            points = run_cells(
                cfg.impls,
                cfg.n_list,
                cfg.d,
                cfg.heads,
                cfg.reps,
                cfg.warmup,
                dtype=cfg.dtype,
                backward=cfg.backward,
                seed=run.config.seed,
                max_workers=cfg.max_workers if cfg.parallel else 1,
                on_point=advance,
            )

        summary = BenchSummary(points=points, baseline_seconds=baseline_seconds(points))
        for name in cfg.impls:
            if name == "noop":
                continue
            try:
                summary.fits[name] = fit_scaling([p for p in points if p.impl == name])
            except InsufficientDataError as e:
                logger.warning("%s", e)
                summary.fit_errors[name] = str(e)

        (run.run_dir / "bench.csv").write_text(points_to_csv(points), encoding="utf-8")
        (run.run_dir / "summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
        format_report(summary, format or run.config.output.format, console)
