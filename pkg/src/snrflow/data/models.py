"""Core data models for snrflow"""

from __future__ import annotations

import math
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Orientation(str, Enum):
    """Which direction of a metric counts as improvement"""

    HIGHER_BETTER = "higher-better"
    LOWER_BETTER = "lower-better"


class AttentionConfig(BaseModel):
    """Head layout and numerical settings of ReLU linear attention"""

    model_config = ConfigDict(frozen=True)

    num_heads: int = Field(4, ge=1)
    head_dim: int = Field(8, ge=1)
    epsilon: float = Field(1e-6, gt=0.0)
    feature_map: Literal["relu"] = "relu"

    @property
    def model_dim(self) -> int:
        return self.num_heads * self.head_dim


class ExpertPartition(BaseModel):
    """Ordered expert boundaries on the routing time axis (t=1 is pure noise).

    Experts are indexed from the noisiest to the cleanest. ``t_boundaries`` therefore
    descends and ``lambda_boundaries`` ascends; entry i separates expert i from expert
    i+1. Expert k owns ``[t_low, t_high)``; expert 0 is also closed at t=1, so a value
    sitting exactly on a boundary belongs to the higher-noise expert.
    """

    model_config = ConfigDict(frozen=True)

    num_experts: int = Field(ge=1)
    strategy: Literal["snr", "uniform", "single"] = "snr"
    lambda_boundaries: list[float] = []
    t_boundaries: list[float] = []
    anchor_t: float | None = None
    lambda_min: float | None = None
    lambda_max: float | None = None
    labels: list[str] = []

    @model_validator(mode="after")
    def _check_boundaries(self) -> ExpertPartition:
        if len(self.t_boundaries) != self.num_experts - 1:
            raise ValueError(
                f"{self.num_experts} experts need {self.num_experts - 1} boundaries, "
                f"got {len(self.t_boundaries)}"
            )
        if len(self.lambda_boundaries) != len(self.t_boundaries):
            raise ValueError("lambda_boundaries and t_boundaries differ in length")
        edges = [1.0, *self.t_boundaries, 0.0]
        if any(hi <= lo for hi, lo in zip(edges, edges[1:])):
            raise ValueError(f"t boundaries must strictly descend inside (0, 1): {self.t_boundaries}")
        lams = self.lambda_boundaries
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError(f"lambda boundaries must strictly ascend: {lams}")
        if self.labels and len(self.labels) != self.num_experts:
            raise ValueError("labels must name every expert")
        return self

    def t_interval(self, expert_index: int) -> tuple[float, float]:
        """(t_low, t_high) owned by an expert"""
        edges = [1.0, *self.t_boundaries, 0.0]
        return edges[expert_index + 1], edges[expert_index]

    def lambda_interval(self, expert_index: int) -> tuple[float, float]:
        """(lambda_low, lambda_high) owned by an expert; open ends use the effective range"""
        low_end = self.lambda_min if self.lambda_min is not None else -math.inf
        high_end = self.lambda_max if self.lambda_max is not None else math.inf
        edges = [low_end, *self.lambda_boundaries, high_end]
        return edges[expert_index], edges[expert_index + 1]

    def label(self, expert_index: int) -> str:
        if self.labels:
            return self.labels[expert_index]
        return f"Expert {expert_index + 1}"


class RouteDecision(BaseModel):
    """The single expert that serves a routing time"""

    expert_index: int = Field(ge=0)
    t: float = Field(ge=0.0, le=1.0)
    log_snr: float


class RoutingRow(BaseModel):
    """One row of the rendered boundary table"""

    expert_index: int
    label: str
    lambda_low: float
    lambda_high: float
    t_low: float
    t_high: float


class RoutingTable(BaseModel):
    """Rendered partition: effective range, anchor and per-expert rows"""

    strategy: str
    num_experts: int
    lambda_min: float | None = None
    lambda_max: float | None = None
    lambda_anchor: float | None = None
    lambda_boundaries: list[float] = []
    t_boundaries: list[float] = []
    rows: list[RoutingRow] = []


class MetricTrace(BaseModel):
    """(iteration, value) series of one validation or training metric.

    Iterations strictly increase. Values are finite except for NaN entries, which mark
    a divergence event recorded by the trainer.
    """

    name: str
    orientation: Orientation = Orientation.HIGHER_BETTER
    iterations: list[int] = []
    values: list[float] = []

    @model_validator(mode="after")
    def _check_points(self) -> MetricTrace:
        if len(self.iterations) != len(self.values):
            raise ValueError("iterations and values must have equal length")
        if any(i < 0 for i in self.iterations):
            raise ValueError("iterations must be non-negative")
        if any(b <= a for a, b in zip(self.iterations, self.iterations[1:])):
            raise ValueError("iterations must be strictly increasing")
        if any(math.isinf(v) for v in self.values):
            raise ValueError("trace values must be finite or NaN divergence markers")
        return self

    def __len__(self) -> int:
        return len(self.iterations)

    def append(self, iteration: int, value: float) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError(f"iteration {iteration} does not follow {self.iterations[-1]}")
        if math.isinf(value):
            raise ValueError("trace values must be finite or NaN divergence markers")
        self.iterations.append(iteration)
        self.values.append(float(value))

    @property
    def divergence_iteration(self) -> int | None:
        """Iteration of the first NaN marker, if any"""
        for iteration, value in zip(self.iterations, self.values):
            if math.isnan(value):
                return iteration
        return None

    @property
    def divergence_events(self) -> int:
        return sum(1 for v in self.values if math.isnan(v))

    def finite_prefix(self) -> MetricTrace:
        """The trace truncated just before its first divergence marker"""
        cut = len(self.values)
        for idx, value in enumerate(self.values):
            if math.isnan(value):
                cut = idx
                break
        return MetricTrace(
            name=self.name,
            orientation=self.orientation,
            iterations=self.iterations[:cut],
            values=self.values[:cut],
        )


class KneeConfig(BaseModel):
    """Knee detector settings: smoothing window, relative gain floor, roughness ratio"""

    model_config = ConfigDict(frozen=True)

    window: int = Field(9, ge=1)
    min_gain: float = Field(0.005, gt=0.0, lt=1.0)
    osc_var_ratio: float = Field(4.0, gt=0.0)

    @field_validator("window")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("window must be odd so the moving average is centered")
        return value


class KneeReport(BaseModel):
    """Result of knee detection on a single trace"""

    metric: str
    knee_iteration: int
    phase_boundaries: tuple[int, int | None]
    smoothed_trace: MetricTrace
    diagnostics: dict[str, Any] = {}

    @property
    def improve_end(self) -> int:
        return self.phase_boundaries[0]

    @property
    def oscillation_start(self) -> int | None:
        return self.phase_boundaries[1]


class RunStability(BaseModel):
    """Stability summary of one fine-tuning run"""

    name: str
    label: Literal["Stable", "Unstable", "Collapse"]
    final_metric: float | None
    divergence_events: int = 0
    divergence_iteration: int | None = None
    oscillation_amplitude: float = 0.0


class StabilityReport(BaseModel):
    """Side-by-side comparison of two fine-tuning runs on one metric"""

    metric: str
    orientation: Orientation
    run_a: RunStability
    run_b: RunStability
    final_metric_delta: float | None
    oscillation_delta: float
    better_final: Literal["a", "b", "tie", "undecided"]


class BenchPoint(BaseModel):
    """Timing statistics of one (implementation, sequence length) cell"""

    impl: str
    n_tokens: int = Field(ge=1)
    d: int = Field(ge=1)
    heads: int = Field(ge=1)
    dtype: str = "f32"
    backward: bool = False
    samples: list[float] = []
    mean_seconds: float | None = None
    std_seconds: float | None = None
    status: Literal["ok", "failed"] = "ok"
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class ScalingFit(BaseModel):
    """Least-squares power law fit on log-log axes"""

    impl: str
    exponent: float
    intercept: float
    r_squared: float
    n_values: list[int]


class BenchSummary(BaseModel):
    """Everything a sweep produced, as emitted by the bench command"""

    generated_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    baseline_seconds: float | None = None
    points: list[BenchPoint] = []
    fits: dict[str, ScalingFit] = {}
    fit_errors: dict[str, str] = {}


class CheckpointMetadata(BaseModel):
    """JSON metadata block stored in every checkpoint"""

    stage: str = "stage1"
    iteration: int = Field(0, ge=0)
    expert_index: int | Literal["shared"] = "shared"
    metrics: dict[str, float] = {}
    rng_state: dict[str, Any] | None = None
    config: dict[str, Any] = {}
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))


class TensorEntry(BaseModel):
    """Directory entry of one tensor inside a checkpoint file"""

    name: str
    dtype: str
    shape: list[int]
    offset: int
    nbytes: int
    finite: bool | None = None


class ValidationReport(BaseModel):
    """Outcome of checkpoint validation"""

    path: str
    ok: bool
    version: int | None = None
    sha256: str | None = None
    metadata: CheckpointMetadata | None = None
    tensors: list[TensorEntry] = []
    errors: list[str] = []


class RunRecord(BaseModel):
    """One CLI invocation as recorded in the run registry"""

    id: int | None = None
    command: str
    seed: int
    config_fingerprint: str
    run_dir: str
    status: Literal["running", "completed", "failed", "diverged"] = "running"
    exit_code: int | None = None
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    finished_at: datetime | None = None


class EsgfDemoReport(BaseModel):
    """Outcome of the two-stage guided fine-tuning demo"""

    metric: str
    knee_reports: list[KneeReport] = []
    median_knee: float
    knee_checkpoint_iteration: int
    latest_checkpoint_iteration: int
    stage2_lr: float
    stage2_iterations: int
    stability: StabilityReport
