"""Runs command: inspect the run registry"""

from __future__ import annotations

import typer

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import EXIT_ERROR, console, err_console
from snrflow.data.db import Database

app = typer.Typer(name="runs", help="Run registry")


@app.command("list")
def list_runs(
    limit: int = typer.Option(20, "--limit", "-l", min=1, help="Number of runs to show"),
    command: str | None = typer.Option(None, "--command", help="Only runs of this command"),
    format: str = typer.Option("json", "--format", "-f", help="Output format: json, table"),
) -> None:
    """List recorded runs, most recent first"""
    runs = Database().list_runs(limit=limit, command=command)
    format_report(runs, format, console)


@app.command("show")
def show_run(
    run_id: int = typer.Argument(..., help="Registry id of the run"),
    format: str = typer.Option("json", "--format", "-f", help="Output format: json, table"),
) -> None:
    """Show one recorded run"""
    run = Database().get_run(run_id)
    if run is None:
        err_console.print(f"[red]No run with id {run_id}[/red]")
        raise typer.Exit(EXIT_ERROR)
    format_report([run] if format == "table" else run, format, console)
