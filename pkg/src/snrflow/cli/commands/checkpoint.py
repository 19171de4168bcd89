"""Validate-ckpt command: structural and numeric checks of a checkpoint file"""

from __future__ import annotations

from pathlib import Path

import typer

from snrflow.cli.formatters import format_report
from snrflow.cli.runtime import EXIT_ERROR, console
from snrflow.persist.checkpoint import validate


def validate_ckpt(
    path: Path = typer.Argument(..., help="Checkpoint file"),
    format: str = typer.Option("json", "--format", "-f", help="Output format: json, table"),
) -> None:
    """Check magic, version, declared lengths and finiteness; exit 1 when invalid"""
    report = validate(path)
    format_report(report, format, console)
    if not report.ok:
        raise typer.Exit(EXIT_ERROR)
