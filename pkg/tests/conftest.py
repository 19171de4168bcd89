"""Pytest configuration and fixtures"""

from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from snrflow.core.tensor import make_rng
from snrflow.data.db import Database
from snrflow.data.models import MetricTrace


@pytest.fixture
def temp_db(tmp_path):
    """Create temporary database for testing"""
    db = Database(db_path=tmp_path / "runs.db")
    yield db
    db.engine.dispose()


@pytest.fixture
def rng():
    """Seeded generator shared by numeric tests"""
    return make_rng(1234)


@pytest.fixture
def runner():
    """CLI test runner with stdout kept apart from stderr"""
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:
        # click >= 8.2 always separates the streams
        return CliRunner()


@pytest.fixture
def cli_config(tmp_path) -> Path:
    """Small, fast run configuration that writes under tmp_path and skips the registry"""
    path = tmp_path / "snrflow.toml"
    path.write_text(
        f"""seed = 3

[output]
out_dir = "{(tmp_path / 'runs').as_posix()}"
registry = false

[train]
iterations = 20
batch_size = 16
eval_interval = 10
eval_samples = 32

[model]
mlp_hidden = 16
mlp_layers = 2

[sampler]
num_steps = 4
""",
        encoding="utf-8",
    )
    return path


def ramp_trace(
    corner: int,
    rng: np.random.Generator,
    *,
    shallow: int = 150,
    plateau: int = 200,
    oscillating: int = 150,
    noise: float = 0.002,
    amplitude: float = 0.1,
    name: str = "neg_val_loss",
) -> tuple[MetricTrace, int]:
    """Steep ramp to ``corner``, shallow ramp, plateau, then alternating oscillation.

    The concave corner is the ground-truth knee. Returns the trace and the index where
    the oscillation starts.
    """
    top = corner + shallow
    osc = top + plateau
    n = osc + oscillating
    i = np.arange(n)
    values = np.where(i <= corner, 0.8 * i / corner, 0.8 + 0.2 * np.minimum(i - corner, shallow) / shallow)
    values = values + noise * rng.standard_normal(n)
    values[osc:] += amplitude * np.where((i[osc:] - osc) % 2 == 0, 1.0, -1.0)
    return MetricTrace(name=name, iterations=i.tolist(), values=values.tolist()), osc


@pytest.fixture
def make_ramp_trace():
    """Factory for synthetic traces with a known knee"""
    return ramp_trace
