"""Table formatter using Rich"""

from typing import Any

from rich.console import Console
from rich.table import Table

from snrflow.cli.formatters.json import format_json
from snrflow.data.models import BenchSummary, RoutingTable, RunRecord, ValidationReport


def _seconds(value: float | None) -> str:
    return "-" if value is None else f"{value:.6f}"


def format_routing_table(table: RoutingTable, console: Console) -> None:
    console.print(f"\n[bold]Expert partition[/bold] ({table.strategy}, {table.num_experts} experts)")
    if table.lambda_min is not None and table.lambda_max is not None:
        console.print(f"Effective log-SNR range: [{table.lambda_min:.4f}, {table.lambda_max:.4f}]")
    out = Table()
    out.add_column("Expert", justify="right")
    out.add_column("Label", style="cyan")
    out.add_column("lambda low", justify="right")
    out.add_column("lambda high", justify="right")
    out.add_column("t low", justify="right")
    out.add_column("t high", justify="right")
    for row in table.rows:
        out.add_row(
            str(row.expert_index),
            row.label,
            f"{row.lambda_low:.4f}",
            f"{row.lambda_high:.4f}",
            f"{row.t_low:.4f}",
            f"{row.t_high:.4f}",
        )
    console.print(out)


def format_bench_summary(summary: BenchSummary, console: Console) -> None:
    out = Table(title="Attention timings")
    out.add_column("Impl", style="cyan")
    out.add_column("N", justify="right")
    out.add_column("Mean (s)", justify="right")
    out.add_column("Std (s)", justify="right")
    out.add_column("Status")
    for point in summary.points:
        status = point.status if point.ok else f"[red]{point.error or point.status}[/red]"
        out.add_row(point.impl, str(point.n_tokens), _seconds(point.mean_seconds), _seconds(point.std_seconds), status)
    console.print(out)
    if summary.baseline_seconds is not None:
        console.print(f"Harness baseline: {_seconds(summary.baseline_seconds)} s")
    for impl, fit in summary.fits.items():
        console.print(f"{impl}: exponent {fit.exponent:.3f}, R^2 {fit.r_squared:.4f}")
    for impl, error in summary.fit_errors.items():
        console.print(f"[yellow]{impl}: {error}[/yellow]")


def format_runs(runs: list[RunRecord], console: Console) -> None:
    out = Table(title="Runs")
    out.add_column("ID", justify="right")
    out.add_column("Command", style="cyan")
    out.add_column("Seed", justify="right")
    out.add_column("Status")
    out.add_column("Exit", justify="right")
    out.add_column("Started")
    out.add_column("Run directory")
    for run in runs:
        out.add_row(
            str(run.id),
            run.command,
            str(run.seed),
            run.status,
            "-" if run.exit_code is None else str(run.exit_code),
            run.started_at.strftime("%Y-%m-%d %H:%M:%S"),
            run.run_dir,
        )
    console.print(out)


def format_validation(report: ValidationReport, console: Console) -> None:
    verdict = "[green]valid[/green]" if report.ok else "[red]invalid[/red]"
    console.print(f"{report.path}: {verdict} (version {report.version}, sha256 {report.sha256})")
    out = Table()
    out.add_column("Tensor", style="cyan")
    out.add_column("Dtype")
    out.add_column("Shape")
    out.add_column("Finite")
    for entry in report.tensors:
        out.add_row(entry.name, entry.dtype, "x".join(map(str, entry.shape)), str(entry.finite))
    console.print(out)
    for error in report.errors:
        console.print(f"[red]{error}[/red]")


def format_table(report: Any, console: Console) -> None:
    """Format report as Rich table"""
    if isinstance(report, RoutingTable):
        format_routing_table(report, console)
    elif isinstance(report, BenchSummary):
        format_bench_summary(report, console)
    elif isinstance(report, ValidationReport):
        format_validation(report, console)
    elif isinstance(report, list) and all(isinstance(r, RunRecord) for r in report):
        format_runs(report, console)
    else:
        format_json(report, console)
