"""Node checking the averaged run against the divergence envelopes."""

import dataclasses
import logging
from typing import Any, Dict

import numpy as np
from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.analysis import bias_probe
from onepoint_dsgt.certificate import INAPPLICABLE, rate_certificate, theory_constants
from onepoint_dsgt.configuration import Configuration
from onepoint_dsgt.engine import BoundsProbe, run
from onepoint_dsgt.errors import DivergenceError
from onepoint_dsgt.objective import AnalyticRecord, Objective, hessian_norm_bound
from onepoint_dsgt.runs_graph.repetition import build_algo_config, metrics_stride
from onepoint_dsgt.state import ExperimentState
from onepoint_dsgt.utils import repetition_seed
from onepoint_dsgt.zo_estimator import PerturbationSpec

logger = logging.getLogger(__name__)


def _analytic_for_certificate(
    objective: Objective, configuration: Configuration, box: float, seed: int
) -> AnalyticRecord:
    analytic = objective.analytic
    assert analytic is not None
    if objective.kind == "quadratic":
        return analytic
    # no tight Hessian bound for the logistic loss: estimate it on the region the iterates visit
    radius = max(box, float(np.max(np.abs(analytic.x_star)))) * 2.0
    alpha1 = hessian_norm_bound(
        objective, configuration.hessian_samples, radius, np.random.default_rng(seed)
    )
    logger.info("alpha1 estimated from sampled Hessians: %.6g", alpha1)
    return dataclasses.replace(analytic, alpha1=alpha1, alpha1_estimated=True)


async def certify(state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
    """Run a pilot for the empirical bounds and evaluate the rate certificate."""
    configuration = Configuration.from_runnable_config(config)
    run_config, objective, mixing = state.run_config, state.objective, state.mixing
    if run_config is None or objective is None or mixing is None or state.trace is None:
        raise ValueError("No averaged trace found in state")

    pilot_seed = run_config.algorithm.seed + configuration.pilot_seed_offset
    analytic = _analytic_for_certificate(objective, configuration, run_config.algorithm.x0_box, pilot_seed)
    spec = PerturbationSpec(objective.dim, run_config.algorithm.perturbation_scale)
    schedule = run_config.algorithm.schedule.to_schedule()

    probe = BoundsProbe()
    cfg = build_algo_config(run_config, configuration, objective.dim, repetition_seed(pilot_seed, 0))
    try:
        run(objective, mixing, cfg, callbacks=[probe], stride=metrics_stride(run_config, configuration))
    except DivergenceError as exc:
        logger.warning("pilot run diverged: %s", exc)
        certificate: Dict[str, Any] = {
            "verdict": INAPPLICABLE,
            "reason": f"pilot run {exc}",
            "config_hash": state.config_hash,
        }
        return {
            "certificate": certificate,
            "summary": {**(state.summary or {}), "certificate_verdict": INAPPLICABLE},
        }

    try:
        constants = theory_constants(
            analytic,
            objective.n_agents,
            spec,
            mixing.rho_w,
            schedule,
            probe,
            horizon=run_config.algorithm.max_iters,
        )
        certificate = rate_certificate(constants, schedule, state.trace).to_json()
    except ValueError as exc:
        logger.warning("certificate not evaluated: %s", exc)
        certificate = {"verdict": INAPPLICABLE, "reason": str(exc)}

    if state.mode == "certify":
        gamma0 = float(schedule.gamma(0))
        probe_result = bias_probe(
            objective,
            analytic.x_star,
            gamma0,
            spec,
            configuration.bias_samples,
            np.random.default_rng(pilot_seed),
            alpha1=analytic.alpha1,
        )
        certificate["bias_probe"] = {
            "gamma": gamma0,
            "samples": probe_result.samples,
            "bias_norm": probe_result.norm,
            "bound": probe_result.bound,
            "within_bound": probe_result.within_bound(),
        }
    certificate["config_hash"] = state.config_hash
    verdict = certificate["verdict"]
    return {
        "certificate": certificate,
        "summary": {**(state.summary or {}), "certificate_verdict": verdict},
    }
