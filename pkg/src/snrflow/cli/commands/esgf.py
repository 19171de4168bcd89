"""ESGF demo command: knee-start versus latest-start fine-tuning"""

from __future__ import annotations

import typer
from rich.progress import Progress, SpinnerColumn, TextColumn

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import console, err_console, tracked_run
from snrflow.esgf.pipeline import run_esgf_demo


def esgf_demo(ctx: typer.Context) -> None:
    """Run stage-1 training, pick the knee checkpoint and compare two stage-2 fine-tunes"""
    with tracked_run(ctx, "esgf-demo") as run:
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=err_console,
            transient=True,
        ) as progress:
            task = progress.add_task("stage1", total=None)

            def on_step(stage: str, iteration: int) -> None:
                progress.update(task, description=f"{stage}: iteration {iteration}")

            result = run_esgf_demo(run.config, run.run_dir, on_step=on_step)

        (run.run_dir / "report.json").write_text(result.report.model_dump_json(indent=2), encoding="utf-8")
        format_report(result.report, "json", console)
