"""Main CLI entry point"""

import sys
from pathlib import Path

import typer
from rich.console import Console

from snrflow import __version__
from snrflow.cli.commands import bench, checkpoint, config, esgf, knee, plan_moe, runs, sample, train
from snrflow.cli.runtime import GlobalOptions
from snrflow.utils.logging import setup_logging

console = Console()

_app = typer.Typer(
    name="snrflow",
    help="snrflow: linear-attention flow matching with log-SNR expert routing",
    add_completion=False,
    no_args_is_help=True,
)


@_app.callback()
def main_callback(
    ctx: typer.Context,
    config_path: Path | None = typer.Option(None, "--config", "-c", help="Run configuration (TOML)"),
    seed: int | None = typer.Option(None, "--seed", min=0, help="Seed overriding the config"),
    out_dir: str | None = typer.Option(None, "--out-dir", help="Directory for run outputs"),
    verbose: bool = typer.Option(False, "--verbose", "-V", help="Debug logging on stderr"),
    log_file: Path | None = typer.Option(None, "--log-file", help="Also write logs to this file"),
) -> None:
    """snrflow: linear-attention flow matching with log-SNR expert routing"""
    setup_logging(level="INFO", log_file=log_file, verbose=verbose)
    ctx.obj = GlobalOptions(
        config_path=config_path,
        seed=seed,
        out_dir=out_dir,
        verbose=verbose,
        log_file=log_file,
    )


_app.command(name="train", help="Train a flow-matching model")(train.train)
_app.command(name="sample", help="Sample from a checkpoint")(sample.sample)
_app.command(name="plan-moe", help="Print the log-SNR expert partition")(plan_moe.plan_moe)
_app.command(name="detect-knee", help="Knee point of metric traces")(knee.detect_knee_command)
_app.command(name="bench", help="Attention timing sweep")(bench.bench)
_app.command(name="esgf-demo", help="Knee-start versus latest-start fine-tuning")(esgf.esgf_demo)
_app.command(name="validate-ckpt", help="Validate a checkpoint file")(checkpoint.validate_ckpt)
_app.add_typer(config.app, name="config")
_app.add_typer(runs.app, name="runs")


def main() -> None:
    """Main entry point - wrapper to handle --version"""
    if len(sys.argv) > 1 and sys.argv[1] == "--version":
        console.print(f"snrflow version {__version__}")
        sys.exit(0)
    _app()


app = _app


if __name__ == "__main__":
    main()
