"""Utility & helper functions."""

from __future__ import annotations

import hashlib
import json
import logging
from typing import Any, Callable, Mapping, Optional

import numpy as np

ROLES = ("init", "perturbation", "process", "noise")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "INFO", quiet: bool = False) -> None:
    """Install a single stream handler on the package logger."""
    logger = logging.getLogger("onepoint_dsgt")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)
    logger.setLevel(logging.WARNING if quiet else level.upper())
    logger.propagate = False


def config_hash(payload: Mapping[str, Any]) -> str:
    """Return the SHA-256 of the canonical JSON dump of ``payload``."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def repetition_seed(seed: int, repetition: int) -> np.random.SeedSequence:
    """Seed sequence for one repetition of a seeded run."""
    return np.random.SeedSequence([seed, repetition])


class AgentStreams:
    """Independent generators, one per agent per role.

    Roles are ``init`` (initial iterate), ``perturbation`` (Φ), ``process`` (S)
    and ``noise`` (ζ or gradient noise). Streams never share state, so draws
    are uncorrelated across agents.
    """

    def __init__(self, seed: int | np.random.SeedSequence, n_agents: int):
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.n_agents = n_agents
        self._streams: list[dict[str, np.random.Generator]] = []
        for child in root.spawn(n_agents):
            role_seeds = child.spawn(len(ROLES))
            self._streams.append(
                {role: np.random.default_rng(s) for role, s in zip(ROLES, role_seeds)}
            )

    def rng(self, agent: int, role: str) -> np.random.Generator:
        """Return the generator owned by ``agent`` for ``role``."""
        return self._streams[agent][role]


class BlockSampler:
    """Buffer draws from one generator in fixed-size blocks.

    ``draw(rng, size)`` must return an array whose first axis has length
    ``size``; rows are handed out one at a time.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        draw: Callable[[np.random.Generator, int], np.ndarray],
        block: int = 512,
    ):
        self._rng = rng
        self._draw = draw
        self._block = block
        self._buffer: Optional[np.ndarray] = None
        self._cursor = block

    def next(self) -> np.ndarray:
        """Return the next row of the buffered stream."""
        if self._cursor >= self._block:
            self._buffer = self._draw(self._rng, self._block)
            self._cursor = 0
        assert self._buffer is not None
        row = self._buffer[self._cursor]
        self._cursor += 1
        return row
