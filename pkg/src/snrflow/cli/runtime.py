"""Shared plumbing for CLI commands: global options, run directories, exit codes"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import tomli_w
import typer
from rich.console import Console

from snrflow.config import RunConfig, load_run_config
from snrflow.data.db import Database
from snrflow.data.models import RunRecord
from snrflow.errors import ConfigError, DivergenceError, SnrFlowError
from snrflow.utils.hashing import config_fingerprint

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

# stdout carries JSON/CSV results only; everything for humans goes to stderr
console = Console(highlight=False, soft_wrap=True, emoji=False)
err_console = Console(stderr=True)


@dataclass
class GlobalOptions:
    config_path: Path | None = None
    seed: int | None = None
    out_dir: str | None = None
    verbose: bool = False
    log_file: Path | None = None


def global_options(ctx: typer.Context) -> GlobalOptions:
    obj = ctx.obj if ctx is not None else None
    return obj if isinstance(obj, GlobalOptions) else GlobalOptions()


def resolve_config(ctx: typer.Context) -> RunConfig:
    options = global_options(ctx)
    return load_run_config(options.config_path, seed=options.seed, out_dir=options.out_dir)


def make_run_dir(config: RunConfig, command: str) -> Path:
    """Create ``<out_dir>/<command>-<UTC timestamp>-s<seed>`` holding the config snapshot"""
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    run_dir = Path(config.output.out_dir) / f"{command}-{stamp}-s{config.seed}"
    run_dir.mkdir(parents=True, exist_ok=False)
    write_config_snapshot(run_dir, config)
    return run_dir


def write_config_snapshot(run_dir: Path, config: RunConfig) -> Path:
    """The resolved config a run used, as TOML"""
    path = run_dir / "config.toml"
    path.write_text(tomli_w.dumps(config.to_dict()), encoding="utf-8")
    return path


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DivergenceError):
        return EXIT_DIVERGED
    return EXIT_ERROR


def report_error(error: BaseException) -> None:
    if isinstance(error, ConfigError):
        err_console.print(f"[red]Configuration error:[/red] {error}")
    elif isinstance(error, DivergenceError):
        last = error.last_good_checkpoint
        where = getattr(last, "path", None) or getattr(last, "iteration", None)
        err_console.print(
            f"[red]Training diverged at iteration {error.iteration}[/red]; last good checkpoint: {where}"
        )
    else:
        err_console.print(f"[red]Error:[/red] {error}")


@contextmanager
def command_errors() -> Iterator[None]:
    """Map snrflow errors to documented exit codes"""
    try:
        yield
    except (SnrFlowError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        report_error(e)
        raise typer.Exit(exit_code_for(e)) from e


@dataclass
class RunContext:
    config: RunConfig
    run_dir: Path
    run_id: int | None = None


@contextmanager
def tracked_run(ctx: typer.Context, command: str) -> Iterator[RunContext]:
    """Resolve config, create the run directory and record the run in the registry.

    The registry row is closed with the final status whatever happens inside.
    """
    with command_errors():
        config = resolve_config(ctx)
        run = RunContext(config=config, run_dir=make_run_dir(config, command))
    db = Database() if config.output.registry else None
    if db is not None:
        run.run_id = db.record_run_start(
            RunRecord(
                command=command,
                seed=config.seed,
                config_fingerprint=config_fingerprint(config.to_dict()),
                run_dir=str(run.run_dir),
            )
        )
    err_console.print(f"[dim]run directory: {run.run_dir}[/dim]")

    status, code = "completed", EXIT_OK
    try:
        with command_errors():
            yield run
    except typer.Exit as e:
        code = e.exit_code
        status = {EXIT_OK: "completed", EXIT_DIVERGED: "diverged"}.get(code, "failed")
        raise
    except BaseException:
        status, code = "failed", EXIT_ERROR
        raise
    finally:
        if db is not None and run.run_id is not None:
            db.record_run_end(run.run_id, status, code)
