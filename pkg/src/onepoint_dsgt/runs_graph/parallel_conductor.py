"""Parallel conductor running Monte-Carlo repetitions simultaneously."""

import asyncio
import logging
from typing import Any, Dict, List

from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.configuration import Configuration
from onepoint_dsgt.runs_graph.repetition import RepetitionResult, run_repetition
from onepoint_dsgt.state import ExperimentState

logger = logging.getLogger(__name__)


def merge_results(results: List[RepetitionResult]) -> Dict[str, Any]:
    """Collect traces in repetition order and flag the first divergence."""
    ordered = sorted(results, key=lambda r: r.repetition)
    diverged = [r for r in ordered if r.diverged]
    return {
        "traces": [r.trace for r in ordered],
        "diverged": bool(diverged),
        "divergence_round": diverged[0].divergence_round if diverged else None,
    }


async def parallel_conduct_runs(
    state: ExperimentState, config: RunnableConfig = None
) -> Dict[str, Any]:
    """Run every repetition in a worker thread, at most ``max_parallel_runs`` at a time."""
    configuration = Configuration.from_runnable_config(config)
    if state.run_config is None or state.objective is None or state.mixing is None:
        raise ValueError("No network or objective found in state")

    semaphore = asyncio.Semaphore(configuration.max_parallel_runs)

    async def _run_with_semaphore(repetition: int) -> RepetitionResult:
        async with semaphore:
            return await asyncio.to_thread(
                run_repetition,
                repetition,
                state.run_config,
                configuration,
                state.objective,
                state.mixing,
                state.test_data,
            )

    tasks = [_run_with_semaphore(r) for r in range(state.run_config.repetitions)]
    results: List[RepetitionResult] = await asyncio.gather(*tasks)
    logger.info("%d repetitions finished in parallel", len(results))
    return merge_results(results)
