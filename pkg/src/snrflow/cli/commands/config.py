"""Config command: Configuration management"""

from pathlib import Path

import tomli_w
import typer

from snrflow.cli.runtime import EXIT_CONFIG, command_errors, err_console, global_options, resolve_config
from snrflow.config import DEFAULT_CONFIG_PATH, Config
from snrflow.errors import ConfigError

app = typer.Typer(name="config", help="Configuration management")


def _config_path(ctx: typer.Context) -> Path:
    return global_options(ctx).config_path or DEFAULT_CONFIG_PATH


@app.command()
def init(
    ctx: typer.Context,
    force: bool = typer.Option(False, "--force", help="Overwrite an existing file"),
) -> None:
    """Write a configuration file holding every default"""
    config_path = _config_path(ctx)
    if config_path.exists() and not force:
        err_console.print(f"[yellow]Config file already exists: {config_path}[/yellow]")
        return

    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(tomli_w.dumps(Config.DEFAULT_CONFIG), encoding="utf-8")
    err_console.print(f"[green]Configuration file created: {config_path}[/green]")


@app.command()
def show(ctx: typer.Context) -> None:
    """Print the resolved configuration (file, environment and flags) as TOML"""
    with command_errors():
        config = resolve_config(ctx)
    typer.echo(tomli_w.dumps(config.to_dict()), nl=False)


@app.command()
def validate(ctx: typer.Context) -> None:
    """Validate configuration file"""
    config_path = _config_path(ctx)
    try:
        Config(config_path=config_path).validate()
    except ConfigError as e:
        err_console.print("[red]Configuration validation failed:[/red]")
        err_console.print(str(e), markup=False)
        raise typer.Exit(EXIT_CONFIG) from e
    err_console.print(f"[green]Configuration is valid: {config_path}[/green]")
