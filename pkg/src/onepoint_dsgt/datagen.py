"""Synthetic two-class data for the logistic experiments."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from onepoint_dsgt.objective import Dataset

logger = logging.getLogger(__name__)


def two_clusters(n_samples: int, dim: int, separation: float, seed: int) -> Dataset:
    """Balanced Gaussian clusters centred at ``+-(separation / 2) u`` for a random unit ``u``.

    Rows are shuffled so contiguous agent partitions see both classes.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be at least 2, got {n_samples}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    if separation < 0:
        raise ValueError(f"separation must be nonnegative, got {separation}")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    labels = np.where(np.arange(n_samples) < n_samples // 2, 1.0, -1.0)
    features = labels[:, None] * (0.5 * separation) * direction + rng.standard_normal((n_samples, dim))
    order = rng.permutation(n_samples)
    logger.debug("generated %d rows in dimension %d, separation %.3f", n_samples, dim, separation)
    return Dataset(features=features[order], labels=labels[order])


def train_test_split(data: Dataset, test_fraction: float) -> tuple[Dataset, Optional[Dataset]]:
    """Hold out the last ``test_fraction`` of the rows; no test set when it rounds to zero."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    n_test = int(round(test_fraction * data.m))
    if n_test == 0:
        return Dataset(data.features, data.labels), None
    cut = data.m - n_test
    if cut < 1:
        raise ValueError("test_fraction leaves no training rows")
    train = Dataset(data.features[:cut], data.labels[:cut])
    test = Dataset(data.features[cut:], data.labels[cut:])
    return train, test
