"""Node validating the raw run configuration."""

import logging
from typing import Any, Dict

from langchain_core.runnables import RunnableConfig

from onepoint_dsgt.errors import ConfigError
from onepoint_dsgt.state import ExperimentState, apply_overrides, parse_run_config
from onepoint_dsgt.utils import config_hash

logger = logging.getLogger(__name__)


async def validate_config(state: ExperimentState, config: RunnableConfig) -> Dict[str, Any]:
    """Parse the raw config, apply command-line overrides and hash the result."""
    try:
        run_config = apply_overrides(
            parse_run_config(state.config), seed=state.seed_override, repetitions=state.reps_override
        )
    except ConfigError as exc:
        for message in exc.messages:
            logger.error("invalid config: %s", message)
        return {"errors": exc.messages}

    if state.mode == "certify" and run_config.algorithm.algorithm != "onepoint_dsgt":
        return {"errors": ["algorithm.algorithm: certification needs onepoint_dsgt"]}

    return {
        "errors": [],
        "run_config": run_config,
        "config_hash": config_hash(run_config.model_dump(mode="json")),
    }
