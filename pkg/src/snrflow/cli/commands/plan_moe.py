"""Plan-moe command: derive and print the expert boundary table"""

from __future__ import annotations

from typing import Literal

import typer

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import command_errors, console, resolve_config
from snrflow.moe.partition import derive_partition, emit_routing_table, routing_table, uniform_partition
from snrflow.moe.schedule import LogSnrSchedule


def plan_moe(
    ctx: typer.Context,
    sigma_min: float | None = typer.Option(None, "--sigma-min", help="Smallest effective noise level (default: moe.sigma_min)"),
    sigma_max: float | None = typer.Option(None, "--sigma-max", help="Largest effective noise level (default: moe.sigma_max)"),
    anchor_t: float | None = typer.Option(None, "--anchor-t", help="Time of the first split (default: moe.anchor_t)"),
    depth: int | None = typer.Option(None, "--depth", min=0, help="Bisection depth; 2**depth experts (default: moe.depth)"),
    strategy: str | None = typer.Option(None, "--strategy", help="snr or uniform (default: moe.strategy)"),
    format: str = typer.Option("json", "--format", "-f", help="Output format: json, csv, table"),
) -> None:
    """Print the log-SNR expert partition for the given noise range"""
    if format not in ("json", "csv", "table"):
        raise typer.BadParameter(f"unsupported format {format!r}", param_hint="--format")
    with command_errors():
        moe = resolve_config(ctx).moe
        chosen = strategy or moe.strategy
        if chosen not in ("snr", "uniform"):
            raise typer.BadParameter(f"unknown strategy {chosen!r}", param_hint="--strategy")
        schedule = LogSnrSchedule(
            sigma_min if sigma_min is not None else moe.sigma_min,
            sigma_max if sigma_max is not None else moe.sigma_max,
        )
        levels = depth if depth is not None else moe.depth
        if chosen == "uniform":
            partition = uniform_partition(2**levels, schedule)
        else:
            partition = derive_partition(schedule, anchor_t if anchor_t is not None else moe.anchor_t, levels)

        if format == "table":
            format_report(routing_table(partition), "table", console)
        else:
            fmt: Literal["csv", "json"] = "csv" if format == "csv" else "json"
            typer.echo(emit_routing_table(partition, fmt), nl=fmt == "json")
