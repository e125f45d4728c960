"""Node sampling the communication graph and its mixing matrix."""

import logging
from typing import Any, Dict

from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.state import ExperimentState
from onepoint_dsgt.topology import erdos_renyi, metropolis_weights

logger = logging.getLogger(__name__)


async def build_network(state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
    """Sample a connected Erdős–Rényi graph and weight it with Metropolis weights."""
    if state.run_config is None:
        raise ValueError("No validated run config found in state")
    spec = state.run_config.topology
    topology = erdos_renyi(spec.n, spec.p, spec.seed)
    mixing = metropolis_weights(topology)
    logger.info(
        "G(%d, %.3f): %d edges after %d retries, rho_w = %.6f",
        spec.n,
        spec.p,
        len(topology.edges),
        topology.retries,
        mixing.rho_w,
    )
    return {"topology": topology, "mixing": mixing}
