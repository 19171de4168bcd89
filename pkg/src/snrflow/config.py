"""Configuration management.

A run is fully described by a ``RunConfig``: one pydantic section per concern, every
section closed to unknown keys. On disk it is a TOML file whose tables mirror the
sections; anything the file leaves out takes the default listed in
``docs/configuration.md``.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from snrflow.data.models import KneeConfig
from snrflow.errors import ConfigError
from snrflow.flow.datasets import GUIDANCE_DIM
from snrflow.flow.matching import SamplerConfig
from snrflow.flow.optim import AdamConfig
from snrflow.nn.dit import DitConfig

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

DEFAULT_CONFIG_PATH = Path.home() / ".snrflow" / "config.toml"
OUT_DIR_ENV = "SNRFLOW_OUT_DIR"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    task: Literal["two-gaussians", "toy-sr"] = "two-gaussians"
    mlp_hidden: int = Field(64, ge=1)
    mlp_layers: int = Field(3, ge=1)
    dit: DitConfig = DitConfig()


class DataSection(_Section):
    separation: float = Field(1.5, gt=0.0)
    std: float = Field(0.25, gt=0.0)
    sr_factor: int = Field(2, ge=1)
    noise_sigma: float = Field(0.05, ge=0.0)
    # toy-sr only: pair each LR image with its image descriptor as the guidance vector
    guidance: bool = False
    num_train: int = Field(256, ge=1)
    num_val: int = Field(512, ge=1)


class MoeSection(_Section):
    enabled: bool = False
    strategy: Literal["snr", "uniform"] = "snr"
    depth: int = Field(2, ge=0)
    anchor_t: float = Field(0.875, gt=0.0, lt=1.0)
    sigma_min: float = Field(0.0118, gt=0.0)
    sigma_max: float = Field(33.78, gt=0.0)


class TrainSection(_Section):
    iterations: int = Field(1000, ge=0)
    batch_size: int = Field(128, ge=1)
    eval_interval: int = Field(50, ge=1)
    eval_samples: int = Field(512, ge=1)
    eval_images: int = Field(16, ge=1)


class EsgfSection(_Section):
    window: int = Field(9, ge=1)
    min_gain: float = Field(0.005, gt=0.0, lt=1.0)
    osc_var_ratio: float = Field(4.0, gt=0.0)
    stage1_iterations: int = Field(1500, ge=1)
    stage2_iterations: int = Field(400, ge=1)
    stage2_lr: float = Field(0.02, gt=0.0)

    @field_validator("window")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("window must be odd")
        return value

    @property
    def knee(self) -> KneeConfig:
        return KneeConfig(window=self.window, min_gain=self.min_gain, osc_var_ratio=self.osc_var_ratio)


class BenchSection(_Section):
    n_list: list[int] = [256, 512, 1024, 2048, 4096, 8192]
    d: int = Field(32, ge=1)
    heads: int = Field(4, ge=1)
    reps: int = Field(5, ge=5)
    warmup: int = Field(1, ge=1)
    dtype: Literal["f32", "f64"] = "f32"
    impls: list[Literal["linear", "naive", "noop"]] = ["linear", "naive"]
    backward: bool = False
    parallel: bool = False
    max_workers: int = Field(4, ge=1)

    @field_validator("n_list")
    @classmethod
    def _ascending(cls, value: list[int]) -> list[int]:
        if any(n < 1 for n in value) or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("n_list must hold strictly ascending positive lengths")
        return value


class OutputSection(_Section):
    out_dir: str = "runs"
    format: Literal["json", "table"] = "json"
    registry: bool = True


class RunConfig(_Section):
    seed: int = Field(0, ge=0)
    model: ModelSection = ModelSection()
    data: DataSection = DataSection()
    moe: MoeSection = MoeSection()
    optimizer: AdamConfig = AdamConfig()
    sampler: SamplerConfig = SamplerConfig()
    train: TrainSection = TrainSection()
    esgf: EsgfSection = EsgfSection()
    bench: BenchSection = BenchSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _guidance_fits_model(self) -> RunConfig:
        if self.data.guidance and self.model.dit.cond_dim != GUIDANCE_DIM:
            raise ValueError(f"data.guidance needs model.dit.cond_dim = {GUIDANCE_DIM}")
        return self

    def to_dict(self) -> dict[str, Any]:
        """TOML-ready mapping; unset optional values are left out"""
        return self.model_dump(mode="json", exclude_none=True)


def format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{where}: {item['msg']}")
    return "Configuration validation failed:\n" + "\n".join(f"  - {line}" for line in lines)


class Config:
    """Configuration manager"""

    DEFAULT_CONFIG: dict[str, Any] = RunConfig().to_dict()

    def __init__(self, config_path: Path | None = None):
        if config_path is None:
            config_path = DEFAULT_CONFIG_PATH
        self.config_path = Path(config_path)
        self.config: dict[str, Any] = copy.deepcopy(self.DEFAULT_CONFIG)
        self.load()

    def load(self) -> None:
        """Load configuration from file, then apply environment overrides"""
        if self.config_path.exists():
            try:
                with open(self.config_path, "rb") as f:
                    file_config = tomllib.load(f)
            except (OSError, tomllib.TOMLDecodeError) as e:
                raise ConfigError(f"Cannot read {self.config_path}: {e}") from e
            self._merge_config(self.config, file_config)

        out_dir = os.getenv(OUT_DIR_ENV)
        if out_dir:
            self.config["output"]["out_dir"] = out_dir

    def _merge_config(self, base: dict[str, Any], override: dict[str, Any]) -> None:
        """Recursively merge configuration"""
        for key, value in override.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._merge_config(base[key], value)
            else:
                base[key] = value

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Get configuration value"""
        return self.config.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value: Any) -> None:
        """Set configuration value"""
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value

    def save(self) -> None:
        """Save configuration to file"""
        run_config = self.validate()
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_path, "wb") as f:
            tomli_w.dump(run_config.to_dict(), f)

    def validate(self) -> RunConfig:
        """Validate configuration values, returning the typed config"""
        try:
            return RunConfig.model_validate(self.config)
        except ValidationError as e:
            raise ConfigError(format_validation_error(e)) from e

    def run_config(self) -> RunConfig:
        return self.validate()


def load_run_config(path: Path | None, *, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Resolve the config used by a CLI run: file, environment, then command-line flags"""
    if path is not None and not Path(path).exists():
        raise ConfigError(f"Config file not found: {path}")
    config = Config(path)
    if seed is not None:
        config.config["seed"] = seed
    if out_dir is not None:
        config.set("output", "out_dir", out_dir)
    return config.validate()
