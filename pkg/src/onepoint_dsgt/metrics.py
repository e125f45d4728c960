"""Per-iteration metrics and the trace they are recorded into."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import TYPE_CHECKING, Any, Iterable, Optional

import numpy as np

if TYPE_CHECKING:
    from onepoint_dsgt.objective import Dataset, Objective


TRACE_FIELDS = ("k", "loss", "divergence", "consensus", "cum_regret")
REGRET_SLACK = 1e-12


def divergence(x: np.ndarray, x_star: np.ndarray) -> float:
    """``||xbar - x*||^2`` with ``xbar`` the column mean of the stack."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_star = np.asarray(x_star, dtype=float)
    if x.shape[1] != x_star.shape[0]:
        raise ValueError(f"dimension mismatch: stack has {x.shape[1]} columns, x* has {x_star.shape[0]}")
    diff = x.mean(axis=0) - x_star
    return float(diff @ diff)


def consensus_error(x: np.ndarray) -> float:
    """``sum_i ||x_i - xbar||^2``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < 1:
        raise ValueError("need at least one agent")
    deviation = x - x.mean(axis=0)
    return float(np.sum(deviation * deviation))


def accuracy(theta_bar: np.ndarray, test: Dataset) -> float:
    """Fraction of rows with ``sign(X^T theta) == label``; a zero margin predicts +1."""
    if test.m == 0:
        raise ValueError("empty test set")
    theta_bar = np.asarray(theta_bar, dtype=float)
    if theta_bar.shape != (test.dim,):
        raise ValueError(f"theta must have shape ({test.dim},), got {theta_bar.shape}")
    predictions = np.where(test.features @ theta_bar >= 0.0, 1.0, -1.0)
    return float(np.mean(predictions == test.labels))


@dataclass(frozen=True)
class IterationRecord:
    """Metrics of one logged round."""

    k: int
    loss: float
    divergence: float
    consensus: float
    cum_regret: float
    accuracy: Optional[float] = None


@dataclass
class RunTrace:
    """Logged rounds in strictly increasing ``k``."""

    records: list[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        """Add a record; ``k`` must exceed the last logged round."""
        if self.records and record.k <= self.records[-1].k:
            raise ValueError(f"round {record.k} does not follow round {self.records[-1].k}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def has_accuracy(self) -> bool:
        """Whether the accuracy column is populated."""
        return bool(self.records) and all(r.accuracy is not None for r in self.records)

    @property
    def columns(self) -> tuple[str, ...]:
        """Column names in CSV order."""
        return TRACE_FIELDS + (("accuracy",) if self.has_accuracy else ())

    def column(self, name: str) -> np.ndarray:
        """Values of one field across records."""
        if name not in {f.name for f in fields(IterationRecord)}:
            raise ValueError(f"unknown trace field {name!r}")
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def ks(self) -> np.ndarray:
        """Logged round indices."""
        return np.array([r.k for r in self.records], dtype=int)

    def as_rows(self) -> list[dict[str, Any]]:
        """Records as dictionaries restricted to ``columns``."""
        cols = self.columns
        return [{c: v for c, v in asdict(r).items() if c in cols} for r in self.records]


def average_traces(traces: Iterable[RunTrace]) -> RunTrace:
    """Mean of every field across repetitions, aligned on ``k``.

    Repetitions that stopped early contribute to the rounds they reached.
    """
    traces = [t for t in traces if len(t)]
    if not traces:
        return RunTrace()
    by_k: dict[int, list[IterationRecord]] = {}
    for trace in traces:
        for record in trace.records:
            by_k.setdefault(record.k, []).append(record)
    averaged = RunTrace()
    for k in sorted(by_k):
        group = by_k[k]
        accs = [r.accuracy for r in group]
        averaged.append(
            IterationRecord(
                k=k,
                loss=float(np.mean([r.loss for r in group])),
                divergence=float(np.mean([r.divergence for r in group])),
                consensus=float(np.mean([r.consensus for r in group])),
                cum_regret=float(np.mean([r.cum_regret for r in group])),
                accuracy=None if any(a is None for a in accs) else float(np.mean(accs)),
            )
        )
    return averaged


class RunCallback:
    """Hooks invoked by the engine; both default to no-ops.

    ``on_round`` sees every round, ``on_record`` only the logged ones.
    """

    def on_round(self, state: Any) -> None:
        """Called once per round, before any ``on_record`` of the same round."""

    def on_record(self, state: Any) -> None:
        """Called at logged rounds."""


class TraceRecorder(RunCallback):
    """Builds a ``RunTrace``; regret is summed over every round, not only logged ones."""

    def __init__(self, obj: Objective, test_data: Optional[Dataset] = None):
        if obj.analytic is None:
            raise ValueError("trace recording needs an objective with an analytic record")
        self.obj = obj
        self.test_data = test_data
        self.x_star = obj.analytic.x_star
        self.loss_star = obj.loss(self.x_star)
        self.trace = RunTrace()
        self._cum_regret = 0.0
        self._loss = float("nan")

    def on_round(self, state: Any) -> None:
        self._loss = self.obj.loss(state.x.mean(axis=0))
        gap = self._loss - self.loss_star
        if gap < -REGRET_SLACK:
            raise ValueError(f"loss {self._loss} below the optimum {self.loss_star}; x* is not a minimizer")
        self._cum_regret += max(gap, 0.0)

    def on_record(self, state: Any) -> None:
        x_bar = state.x.mean(axis=0)
        self.trace.append(
            IterationRecord(
                k=state.k,
                loss=self._loss,
                divergence=divergence(state.x, self.x_star),
                consensus=consensus_error(state.x),
                cum_regret=self._cum_regret,
                accuracy=None if self.test_data is None else accuracy(x_bar, self.test_data),
            )
        )
