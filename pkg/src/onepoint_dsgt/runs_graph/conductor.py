"""Run conductor that chooses between serial and parallel repetition modes."""

import logging
from typing import Any, Dict

from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.configuration import Configuration
from onepoint_dsgt.runs_graph.parallel_conductor import merge_results, parallel_conduct_runs
from onepoint_dsgt.runs_graph.repetition import run_repetition
from onepoint_dsgt.state import ExperimentState

logger = logging.getLogger(__name__)


async def conduct_runs(state: ExperimentState, config: RunnableConfig = None) -> Dict[str, Any]:
    """Execute the configured repetitions serially or in parallel."""
    configuration = Configuration.from_runnable_config(config)

    if configuration.parallel_runs:
        return await parallel_conduct_runs(state, config)

    if state.run_config is None or state.objective is None or state.mixing is None:
        raise ValueError("No network or objective found in state")
    results = [
        run_repetition(
            r,
            state.run_config,
            configuration,
            state.objective,
            state.mixing,
            state.test_data,
        )
        for r in range(state.run_config.repetitions)
    ]
    logger.info("%d repetitions finished serially", len(results))
    return merge_results(results)
