"""Node averaging the repetitions and fitting their rates."""

import logging
from dataclasses import asdict
from typing import Any, Dict, Optional

from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.analysis import (
    average_traces,
    geometric_threshold,
    loglog_slope,
    rate_window,
    thresholds,
)
from onepoint_dsgt.metrics import RunTrace
from onepoint_dsgt.state import ExperimentState
from onepoint_dsgt.zo_estimator import PerturbationSpec

logger = logging.getLogger(__name__)

FITTED_FIELDS = ("divergence", "consensus", "cum_regret")


def _slope(trace: RunTrace, field: str, k_lo: int, k_hi: int) -> Optional[float]:
    try:
        return loglog_slope(trace, field, k_lo, k_hi)
    except ValueError as exc:
        logger.warning("no %s slope: %s", field, exc)
        return None


async def summarize(state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
    """Average the traces on ``k`` and report final metrics and fitted slopes."""
    if state.run_config is None or state.objective is None or state.mixing is None:
        raise ValueError("No network or objective found in state")
    run_config = state.run_config
    averaged = average_traces(state.traces)
    schedule = run_config.algorithm.schedule.to_schedule()
    rho_w = state.mixing.rho_w

    k0 = k1 = k2 = None
    try:
        if run_config.algorithm.algorithm == "onepoint_dsgt":
            assert state.objective.analytic is not None
            spec = PerturbationSpec(state.objective.dim, run_config.algorithm.perturbation_scale)
            k0, k1, k2 = thresholds(state.objective.analytic.lam * spec.alpha2, schedule, rho_w)
        else:
            k0, k1 = 0, geometric_threshold(schedule, rho_w)
            k2 = k1
    except ValueError as exc:
        logger.warning("thresholds unavailable: %s", exc)

    slopes: Dict[str, Optional[float]] = {field: None for field in FITTED_FIELDS}
    window = None
    if len(averaged) and k2 is not None:
        k_max = int(averaged.ks[-1])
        k_lo, k_hi = rate_window(k2, k_max)
        window = [k_lo, k_hi]
        if k_lo < k_hi:
            slopes = {field: _slope(averaged, field, k_lo, k_hi) for field in FITTED_FIELDS}

    summary = {
        "config_hash": state.config_hash,
        "algorithm": run_config.algorithm.algorithm,
        "objective": run_config.objective.kind,
        "repetitions": run_config.repetitions,
        "max_iters": run_config.algorithm.max_iters,
        "rho_w": rho_w,
        "K0": k0,
        "K1": k1,
        "K2": k2,
        "fit_window": window,
        "slopes": slopes,
        "final": asdict(averaged.records[-1]) if len(averaged) else None,
        "diverged": state.diverged,
        "divergence_round": state.divergence_round,
        "certificate_verdict": None,
    }
    return {"trace": averaged, "summary": summary}
