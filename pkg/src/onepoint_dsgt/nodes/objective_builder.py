"""Node building the objective the agents optimize."""

import logging
from typing import Any, Dict

from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.datagen import train_test_split, two_clusters
from onepoint_dsgt.objective import NoiseSpec, make_logistic, make_quadratic
from onepoint_dsgt.persistence import read_dataset
from onepoint_dsgt.state import ExperimentState, LogisticSpec, QuadraticSpec

logger = logging.getLogger(__name__)


async def build_objective(state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
    """Build a quadratic or logistic objective partitioned over the agents."""
    if state.run_config is None:
        raise ValueError("No validated run config found in state")
    spec = state.run_config.objective
    n_agents = state.run_config.n_agents

    if isinstance(spec, QuadraticSpec):
        objective = make_quadratic(
            n=spec.n_agents,
            d=spec.dim,
            condition=spec.condition,
            seed=spec.seed,
            process_variance=spec.process_variance,
            noise_variance=spec.noise_variance,
            center_spread=spec.center_spread,
        )
        logger.info("quadratic objective: n=%d, d=%d", spec.n_agents, spec.dim)
        return {"objective": objective, "test_data": None}

    assert isinstance(spec, LogisticSpec)
    if spec.data_path is not None:
        data = read_dataset(spec.data_path)
    else:
        assert spec.synthetic is not None
        synthetic = spec.synthetic
        data = two_clusters(synthetic.n_samples, synthetic.dim, synthetic.separation, synthetic.seed)
    train, test = train_test_split(data, spec.test_fraction)
    if train.m < n_agents:
        raise ValueError(f"{train.m} training rows cannot cover {n_agents} agents")
    objective = make_logistic(
        train.split(n_agents), spec.c_reg, spec.sigma_u, NoiseSpec(spec.noise_variance)
    )
    logger.info(
        "logistic objective: %d training rows, %d test rows, d=%d",
        train.m,
        0 if test is None else test.m,
        train.dim,
    )
    return {"objective": objective, "test_data": test}
