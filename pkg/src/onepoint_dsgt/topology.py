"""Communication graphs and doubly stochastic mixing matrices.

Agents are indexed ``0..n-1``. A ``Topology`` is always connected and
undirected; a ``MixingMatrix`` is symmetric, doubly stochastic and carries its
contraction factor ``rho_w = ||W - 11^T/n||_2 < 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, FrozenSet, Tuple

import networkx as nx
import numpy as np

from onepoint_dsgt.errors import ConnectivityError, MixingMatrixError

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]

STOCHASTIC_TOL = 1e-9
MIXING_TOL = 1e-12
RHO_TOL = 1e-10
MAX_ER_RETRIES = 10_000


def _normalize_edges(edges: Any) -> FrozenSet[Edge]:
    normalized = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self-loop ({i}, {j}) is not an edge")
        normalized.add((min(i, j), max(i, j)))
    return frozenset(normalized)


@dataclass(frozen=True)
class Topology:
    """An undirected connected communication graph.

    Edges are stored once as ``(i, j)`` with ``i < j``; symmetry is implied.
    """

    n: int
    edges: FrozenSet[Edge]
    retries: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"agent count must be positive, got {self.n}")
        object.__setattr__(self, "edges", _normalize_edges(self.edges))
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) references an agent outside 0..{self.n - 1}")
        if not nx.is_connected(self.to_networkx()):
            raise ValueError("topology is not connected")

    def to_networkx(self) -> nx.Graph:
        """Return the graph as a ``networkx.Graph``."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph

    def degrees(self) -> np.ndarray:
        """Return the degree of every agent."""
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_json(self) -> dict[str, Any]:
        """Serialize as ``{"n": int, "edges": [[i, j], ...]}``."""
        return {"n": self.n, "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> Topology:
        """Build a topology from its JSON form."""
        return cls(n=int(payload["n"]), edges=frozenset(tuple(e) for e in payload["edges"]))


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Symmetric doubly stochastic coupling matrix with its contraction factor.

    Row and column sums must equal 1 within 1e-12 and ``rho_w`` must match
    ``spectral_contraction(w)`` within 1e-10.
    """

    w: np.ndarray
    rho_w: float

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"mixing matrix must be square, got shape {w.shape}")
        if np.any(w < 0):
            raise MixingMatrixError("mixing matrix has negative entries")
        if not np.allclose(w, w.T, atol=1e-12, rtol=0.0):
            raise MixingMatrixError("mixing matrix is not symmetric")
        if np.any(np.diag(w) <= 0):
            raise MixingMatrixError("mixing matrix needs strictly positive diagonal entries")
        if not is_doubly_stochastic(w, MIXING_TOL):
            raise MixingMatrixError("not doubly stochastic")
        if not 0.0 <= self.rho_w < 1.0:
            raise MixingMatrixError(f"rho_w must lie in [0, 1), got {self.rho_w}")
        rho = spectral_contraction(w)
        if abs(rho - self.rho_w) > RHO_TOL:
            raise MixingMatrixError(f"rho_w {self.rho_w} disagrees with ||W - 11^T/n||_2 = {rho}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        """Number of agents."""
        return self.w.shape[0]

    def to_json(self) -> dict[str, Any]:
        """Serialize as a row-major array with a ``rho_w`` field."""
        return {"w": self.w.tolist(), "rho_w": self.rho_w}

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> MixingMatrix:
        """Build a mixing matrix from its JSON form; a stale ``rho_w`` is rejected."""
        return cls(w=np.asarray(payload["w"], dtype=float), rho_w=float(payload["rho_w"]))


def erdos_renyi(n: int, p: float, seed: int, max_retries: int = MAX_ER_RETRIES) -> Topology:
    """Sample a connected Erdős–Rényi graph G(n, p).

    A disconnected sample is discarded and the draw repeated with ``seed + 1``,
    ``seed + 2``, ... so the result is a pure function of ``(n, p, seed)``.

    Raises:
        ValueError: If ``n < 2`` or ``p`` is outside ``(0, 1]``.
        ConnectivityError: If no connected graph appears within ``max_retries`` draws.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")

    for attempt in range(max_retries):
        graph = nx.gnp_random_graph(n, p, seed=seed + attempt)
        if nx.is_connected(graph):
            logger.debug("connected G(%d, %.3f) after %d retries", n, p, attempt)
            return Topology(n=n, edges=frozenset(graph.edges()), retries=attempt)
    raise ConnectivityError(
        f"connectivity unreachable: no connected G({n}, {p}) in {max_retries} draws from seed {seed}"
    )


def metropolis_weights(t: Topology) -> MixingMatrix:
    """Metropolis–Hastings weights ``1 / (1 + max(deg_i, deg_j))`` on the edges of ``t``."""
    deg = t.degrees()
    w = np.zeros((t.n, t.n))
    for i, j in t.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return MixingMatrix(w=w, rho_w=spectral_contraction(w))


def is_doubly_stochastic(w: np.ndarray, tol: float = STOCHASTIC_TOL) -> bool:
    """Check row and column sums against 1."""
    w = np.asarray(w, dtype=float)
    return bool(
        np.all(np.abs(w.sum(axis=0) - 1.0) <= tol) and np.all(np.abs(w.sum(axis=1) - 1.0) <= tol)
    )


def spectral_contraction(w: np.ndarray | MixingMatrix) -> float:
    """Largest singular value of ``W - 11^T/n``.

    Values ``>= 1`` (a disconnected graph) are returned as-is; ``MixingMatrix``
    rejects them.

    Raises:
        MixingMatrixError: If a row or column sum deviates from 1 beyond 1e-9.
    """
    w = np.asarray(w.w if isinstance(w, MixingMatrix) else w, dtype=float)
    if not is_doubly_stochastic(w):
        raise MixingMatrixError("not doubly stochastic")
    n = w.shape[0]
    deviation = w - np.full((n, n), 1.0 / n)
    return float(np.linalg.norm(deviation, ord=2))
