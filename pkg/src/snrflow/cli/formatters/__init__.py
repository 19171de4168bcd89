"""Output formatters"""

from typing import Any

from rich.console import Console

from snrflow.cli.formatters.json import format_json
from snrflow.cli.formatters.table import format_table


def format_report(report: Any, format_type: str, console: Console) -> None:
    """Format and display report"""
    if format_type == "table":
        format_table(report, console)
    else:
        format_json(report, console)
