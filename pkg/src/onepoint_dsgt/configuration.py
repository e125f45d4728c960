"""Define the configurable parameters of the experiment pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

from langchain_core.runnables import RunnableConfig, ensure_config


@dataclass(kw_only=True)
class Configuration:
    """Runtime knobs of the experiment pipeline."""

    parallel_runs: bool = field(
        default=False,
        metadata={
            "description": "Whether to run the Monte-Carlo repetitions in parallel. "
            "Results are merged in repetition order either way."
        },
    )

    max_parallel_runs: int = field(
        default=4,
        metadata={
            "description": "Maximum number of repetitions executing at once. "
            "Only used when parallel_runs is True."
        },
    )

    metrics_stride: int = field(
        default=100,
        metadata={
            "description": "Default number of rounds between two logged trace rows "
            "when the run config does not set one."
        },
    )

    divergence_threshold: float = field(
        default=1e12,
        metadata={
            "description": "Largest absolute entry allowed in x or y before a run is "
            "declared divergent."
        },
    )

    pilot_seed_offset: int = field(
        default=10_000,
        metadata={
            "description": "Offset added to the algorithm seed for the certificate pilot run, "
            "keeping its streams disjoint from the Monte-Carlo repetitions."
        },
    )

    bias_samples: int = field(
        default=100_000,
        metadata={"description": "Monte-Carlo samples per point for bias probes."},
    )

    hessian_samples: int = field(
        default=64,
        metadata={
            "description": "Sampled points used to estimate alpha1 when the objective "
            "carries no tight Hessian bound."
        },
    )

    @classmethod
    def from_runnable_config(
        cls, config: Optional[RunnableConfig] = None
    ) -> Configuration:
        """Create a Configuration instance from a RunnableConfig object."""
        config = ensure_config(config)
        configurable = config.get("configurable") or {}
        _fields = {f.name for f in fields(cls) if f.init}
        return cls(**{k: v for k, v in configurable.items() if k in _fields})
