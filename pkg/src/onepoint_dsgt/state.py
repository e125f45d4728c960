"""Define the run configuration models and the pipeline state structures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing_extensions import Annotated

from onepoint_dsgt.errors import ConfigError
from onepoint_dsgt.metrics import RunTrace
from onepoint_dsgt.objective import Dataset, Objective
from onepoint_dsgt.topology import MixingMatrix, Topology
from onepoint_dsgt.zo_estimator import Schedule


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticSpec(_Strict):
    """Two-cluster synthetic classification data."""

    n_samples: int = Field(default=2000, ge=2, description="Number of rows generated")
    dim: int = Field(default=10, ge=1, description="Feature dimension")
    separation: float = Field(default=4.0, ge=0.0, description="Distance between the cluster means")
    seed: int = Field(default=0, description="Generator seed")


class QuadraticSpec(_Strict):
    """Random strongly convex quadratic objective."""

    kind: Literal["quadratic"] = "quadratic"
    n_agents: int = Field(default=10, ge=1)
    dim: int = Field(default=10, ge=1)
    condition: float = Field(default=3.0, ge=1.0, description="Upper end of the Hessian spectrum")
    seed: int = 0
    process_variance: float = Field(default=1e-4, ge=0.0)
    noise_variance: float = Field(default=0.0, ge=0.0)
    center_spread: float = Field(default=1.0, ge=0.0, description="Half-width of the box holding the centers")


class LogisticSpec(_Strict):
    """Regularized logistic loss over a dataset file or synthetic data."""

    kind: Literal["logistic"] = "logistic"
    data_path: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    test_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    c_reg: float = Field(default=0.1, gt=0.0)
    sigma_u: float = Field(default=0.01, ge=0.0)
    noise_variance: float = Field(default=1.0, ge=0.0)

    @model_validator(mode="after")
    def _one_source(self) -> LogisticSpec:
        if (self.data_path is None) == (self.synthetic is None):
            raise ValueError("exactly one of data_path and synthetic must be given")
        return self


ObjectiveSpec = Annotated[Union[QuadraticSpec, LogisticSpec], Field(discriminator="kind")]


class TopologySpec(_Strict):
    """Connected Erdős–Rényi communication graph."""

    n: int = Field(default=10, ge=2)
    p: float = Field(default=0.5, gt=0.0, le=1.0)
    seed: int = 0


class ScheduleSpec(_Strict):
    """Step-size and perturbation-radius schedules."""

    alpha0: float = Field(gt=0.0)
    upsilon1: float
    gamma0: float = Field(gt=0.0)
    upsilon2: float

    @model_validator(mode="after")
    def _exponents(self) -> ScheduleSpec:
        self.to_schedule()
        return self

    def to_schedule(self) -> Schedule:
        """Build the validated schedule."""
        return Schedule(
            alpha0=self.alpha0, upsilon1=self.upsilon1, gamma0=self.gamma0, upsilon2=self.upsilon2
        )


class AlgorithmSpec(_Strict):
    """Algorithm choice and its parameters."""

    algorithm: Literal["onepoint_dsgt", "dsgt_noisygrad"] = "onepoint_dsgt"
    schedule: ScheduleSpec
    perturbation_scale: float = Field(default=1.5, gt=0.0)
    grad_noise_std: float = Field(default=1.0, ge=0.0)
    seed: int = 0
    max_iters: int = Field(default=1000, ge=1)
    x0_box: float = Field(default=0.5, ge=0.0)


class RunConfig(_Strict):
    """One experiment: objective, network, algorithm and Monte-Carlo settings."""

    objective: ObjectiveSpec
    topology: TopologySpec
    algorithm: AlgorithmSpec
    metrics_stride: Optional[int] = Field(default=None, ge=1)
    repetitions: int = Field(default=20, ge=1)
    output: Optional[str] = None

    @model_validator(mode="after")
    def _agents_agree(self) -> RunConfig:
        if isinstance(self.objective, QuadraticSpec) and self.objective.n_agents != self.topology.n:
            raise ValueError(
                f"objective.n_agents ({self.objective.n_agents}) must equal topology.n ({self.topology.n})"
            )
        return self

    @property
    def n_agents(self) -> int:
        """Number of agents in the network."""
        return self.topology.n


class SweepGrid(_Strict):
    """Exponent pairs to sweep."""

    upsilon: List[Tuple[float, float]] = Field(min_length=1)


class SweepConfig(_Strict):
    """A base run and the grid of exponent pairs applied to it."""

    base: RunConfig
    grid: SweepGrid


def flatten_errors(exc: ValidationError) -> list[str]:
    """Render every validation error as ``"<dotted.field>: <message>"``."""
    messages = []
    for err in exc.errors():
        location = ".".join(str(part) for part in err["loc"]) or "config"
        messages.append(f"{location}: {err['msg']}")
    return messages


def parse_run_config(payload: Any) -> RunConfig:
    """Validate a raw JSON document.

    Raises:
        ConfigError: With one message per offending field.
    """
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigError(flatten_errors(exc)) from exc


def parse_sweep_config(payload: Any) -> SweepConfig:
    """Validate a sweep document.

    Raises:
        ConfigError: With one message per offending field.
    """
    try:
        return SweepConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigError(flatten_errors(exc)) from exc


def apply_overrides(
    config: RunConfig, seed: Optional[int] = None, repetitions: Optional[int] = None
) -> RunConfig:
    """Return ``config`` with the command-line overrides applied."""
    payload = config.model_dump()
    if seed is not None:
        payload["algorithm"]["seed"] = seed
    if repetitions is not None:
        payload["repetitions"] = repetitions
    return parse_run_config(payload)


@dataclass
class InputState:
    """Defines the input of the experiment pipeline."""

    config: dict = field(default_factory=dict)
    mode: Literal["run", "certify"] = field(default="run")
    seed_override: Optional[int] = field(default=None)
    reps_override: Optional[int] = field(default=None)


@dataclass
class OutputState:
    """Defines the output of the experiment pipeline."""

    errors: List[str] = field(default_factory=list)
    run_config: Optional[RunConfig] = field(default=None)
    config_hash: Optional[str] = field(default=None)
    trace: Optional[RunTrace] = field(default=None)
    summary: Optional[dict] = field(default=None)
    certificate: Optional[dict] = field(default=None)
    diverged: bool = field(default=False)


@dataclass
class ExperimentState(InputState, OutputState):
    """Represents the complete state of one experiment."""

    topology: Optional[Topology] = field(default=None)
    mixing: Optional[MixingMatrix] = field(default=None)
    objective: Optional[Objective] = field(default=None)
    test_data: Optional[Dataset] = field(default=None)
    traces: List[RunTrace] = field(default_factory=list)
    divergence_round: Optional[int] = field(default=None)
