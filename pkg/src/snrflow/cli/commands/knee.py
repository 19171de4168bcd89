"""Detect-knee command: knee point of metric traces read from CSV"""

from __future__ import annotations

from pathlib import Path

import typer
from pydantic import ValidationError

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import command_errors, console, resolve_config
from snrflow.config import format_validation_error
from snrflow.data.models import KneeConfig
from snrflow.errors import ConfigError
from snrflow.esgf.knee import detect_knee
from snrflow.persist.traces import read_traces


def detect_knee_command(
    ctx: typer.Context,
    traces_csv: Path = typer.Argument(..., exists=True, dir_okay=False, help="Trace CSV (iteration,metric_name,value)"),
    window: int | None = typer.Option(None, "--window", help="Odd smoothing window (default: esgf.window)"),
    min_gain: float | None = typer.Option(None, "--min-gain", help="Relative gain floor of the improving phase (default: esgf.min_gain)"),
    osc_ratio: float | None = typer.Option(None, "--osc-ratio", help="Roughness ratio that marks oscillation (default: esgf.osc_var_ratio)"),
    metric: str | None = typer.Option(None, "--metric", "-m", help="Metric to analyse; all metrics when omitted"),
) -> None:
    """Locate the knee of each trace and print the reports as JSON"""
    with command_errors():
        esgf = resolve_config(ctx).esgf
        try:
            cfg = KneeConfig(
                window=window if window is not None else esgf.window,
                min_gain=min_gain if min_gain is not None else esgf.min_gain,
                osc_var_ratio=osc_ratio if osc_ratio is not None else esgf.osc_var_ratio,
            )
        except ValidationError as e:
            raise ConfigError(format_validation_error(e)) from e

        traces = read_traces(traces_csv)
        if metric is not None:
            selected = [t for t in traces if t.name == metric]
            if not selected:
                names = ", ".join(t.name for t in traces) or "none"
                raise typer.BadParameter(f"metric {metric!r} not in {traces_csv} (found: {names})", param_hint="--metric")
            format_report(detect_knee(selected[0], cfg), "json", console)
        elif len(traces) == 1:
            format_report(detect_knee(traces[0], cfg), "json", console)
        else:
            format_report([detect_knee(trace, cfg) for trace in traces], "json", console)
