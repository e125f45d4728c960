"""Exception types raised across the package.

The CLI maps ``ConfigError`` to exit code 2 and ``DivergenceError`` to exit code 3.
"""

from __future__ import annotations

from typing import Any, Optional


class OnePointDSGTError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(OnePointDSGTError, ValueError):
    """Raised when a run configuration fails validation."""

    def __init__(self, messages: list[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class ConnectivityError(OnePointDSGTError, RuntimeError):
    """Raised when no connected graph was sampled within the retry budget."""


class MixingMatrixError(OnePointDSGTError, ValueError):
    """Raised when a matrix is not doubly stochastic."""


class NoAnalyticGradientError(OnePointDSGTError, NotImplementedError):
    """Raised when an objective has no analytic gradient to offer."""


class DivergenceError(OnePointDSGTError, RuntimeError):
    """Raised when the iterates leave the finite range.

    Attributes:
        round: The round index at which the violation was detected.
        trace: The partial trace recorded up to that round, if any.
    """

    def __init__(self, round: int, message: str, trace: Optional[Any] = None):
        self.round = round
        self.trace = trace
        super().__init__(f"diverged at round {round}: {message}")
