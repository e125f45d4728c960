"""One seeded Monte-Carlo repetition of a configured run."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from onepoint_dsgt.configuration import Configuration
from onepoint_dsgt.engine import AlgoConfig, run
from onepoint_dsgt.errors import DivergenceError
from onepoint_dsgt.metrics import RunCallback, RunTrace
from onepoint_dsgt.objective import Dataset, Objective
from onepoint_dsgt.state import RunConfig
from onepoint_dsgt.topology import MixingMatrix
from onepoint_dsgt.utils import repetition_seed
from onepoint_dsgt.zo_estimator import PerturbationSpec

logger = logging.getLogger(__name__)


@dataclass
class RepetitionResult:
    """Trace of one repetition, partial when it diverged."""

    repetition: int
    trace: RunTrace
    diverged: bool = False
    divergence_round: Optional[int] = None


def build_algo_config(
    run_config: RunConfig,
    configuration: Configuration,
    dim: int,
    seed: int | np.random.SeedSequence,
) -> AlgoConfig:
    """Translate the validated algorithm block into an engine config."""
    spec = run_config.algorithm
    perturbation = (
        PerturbationSpec(dim=dim, scale=spec.perturbation_scale)
        if spec.algorithm == "onepoint_dsgt"
        else None
    )
    return AlgoConfig(
        algorithm=spec.algorithm,
        schedule=spec.schedule.to_schedule(),
        perturbation=perturbation,
        grad_noise_std=spec.grad_noise_std,
        seed=seed,
        max_iters=spec.max_iters,
        x0_box=spec.x0_box,
        divergence_threshold=configuration.divergence_threshold,
    )


def metrics_stride(run_config: RunConfig, configuration: Configuration) -> int:
    """Logging stride: the run config's when set, otherwise the runtime default."""
    return run_config.metrics_stride or configuration.metrics_stride


def run_repetition(
    repetition: int,
    run_config: RunConfig,
    configuration: Configuration,
    objective: Objective,
    mixing: MixingMatrix,
    test_data: Optional[Dataset] = None,
    callbacks: Sequence[RunCallback] = (),
) -> RepetitionResult:
    """Run repetition ``r`` with streams seeded by ``(algorithm.seed, r)``."""
    cfg = build_algo_config(
        run_config,
        configuration,
        objective.dim,
        repetition_seed(run_config.algorithm.seed, repetition),
    )
    try:
        trace = run(
            objective,
            mixing,
            cfg,
            callbacks=callbacks,
            stride=metrics_stride(run_config, configuration),
            test_data=test_data,
        )
    except DivergenceError as exc:
        logger.warning("repetition %d diverged at round %d", repetition, exc.round)
        return RepetitionResult(
            repetition=repetition,
            trace=exc.trace if exc.trace is not None else RunTrace(),
            diverged=True,
            divergence_round=exc.round,
        )
    logger.debug("repetition %d finished", repetition)
    return RepetitionResult(repetition=repetition, trace=trace)
