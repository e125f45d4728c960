"""CSV and JSON reading and writing for traces, datasets and reports."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

import numpy as np
import pandas as pd

from onepoint_dsgt.metrics import TRACE_FIELDS, IterationRecord, RunTrace
from onepoint_dsgt.objective import Dataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.17g"
LABEL_COLUMN = "label"
SWEEP_COLUMNS = ("upsilon1", "upsilon2", "metric", "slope", "status")


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_trace(trace: RunTrace, path: PathLike) -> Path:
    """Write ``k,loss,divergence,consensus,cum_regret[,accuracy]`` with round-trip precision."""
    path = _prepare(path)
    frame = pd.DataFrame(trace.as_rows(), columns=list(trace.columns))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %d trace rows to %s", len(frame), path)
    return path


def read_trace(path: PathLike) -> RunTrace:
    """Parse a trace CSV back into the exact in-memory trace.

    Raises:
        ValueError: If the header is not a trace header.
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    columns = tuple(frame.columns)
    if columns not in (TRACE_FIELDS, TRACE_FIELDS + ("accuracy",)):
        raise ValueError(f"{path}: unexpected trace header {','.join(columns)}")
    trace = RunTrace()
    for row in frame.itertuples(index=False):
        values = row._asdict()
        trace.append(
            IterationRecord(
                k=int(values["k"]),
                loss=float(values["loss"]),
                divergence=float(values["divergence"]),
                consensus=float(values["consensus"]),
                cum_regret=float(values["cum_regret"]),
                accuracy=float(values["accuracy"]) if "accuracy" in values else None,
            )
        )
    return trace


def write_dataset(data: Dataset, path: PathLike) -> Path:
    """Write features as ``f0..f{d-1}`` followed by an integer ``label`` column."""
    path = _prepare(path)
    frame = pd.DataFrame(data.features, columns=[f"f{j}" for j in range(data.dim)])
    frame[LABEL_COLUMN] = data.labels.astype(int)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %d rows to %s", data.m, path)
    return path


def read_dataset(path: PathLike) -> Dataset:
    """Load a dataset CSV; every column except ``label`` is a feature.

    Raises:
        ValueError: If the ``label`` column is missing or the file has no rows.
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if LABEL_COLUMN not in frame.columns:
        raise ValueError(f"{path}: missing '{LABEL_COLUMN}' column")
    if frame.empty:
        raise ValueError(f"{path}: no rows")
    features = frame.drop(columns=[LABEL_COLUMN]).to_numpy(dtype=float)
    return Dataset(features=features, labels=frame[LABEL_COLUMN].to_numpy(dtype=float))


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(payload: Mapping[str, Any]) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(payload, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def write_json(payload: Mapping[str, Any], path: PathLike) -> Path:
    """Write ``payload`` as canonical JSON."""
    path = _prepare(path)
    path.write_text(dumps(payload), encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def read_json(path: PathLike) -> Any:
    """Load a JSON document."""
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_sweep(rows: Iterable[Mapping[str, Any]], path: PathLike) -> Path:
    """Write the long-format sweep table."""
    path = _prepare(path)
    frame = pd.DataFrame(list(rows), columns=list(SWEEP_COLUMNS))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %d sweep rows to %s", len(frame), path)
    return path
