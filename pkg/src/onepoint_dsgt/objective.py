"""Per-agent noisy one-point function oracles.

An agent ``i`` only ever sees ``f_i(x, S) + zeta``: the local function under a
fresh draw of the stochastic process ``S``, corrupted by zero-mean Gaussian
noise ``zeta``. The expectation ``F_i(x) = E_S f_i(x, S)`` and its derivatives
are exposed for verification only.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import expit

from onepoint_dsgt.errors import NoAnalyticGradientError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian query noise with variance ``alpha4``."""

    variance: float = 0.0

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ValueError(f"noise variance must be nonnegative, got {self.variance}")

    @property
    def std(self) -> float:
        """Standard deviation of one noise sample."""
        return float(np.sqrt(self.variance))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray | float:
        """Draw noise; always consumes the generator, even at zero variance."""
        return self.std * rng.standard_normal(size)


@dataclass(frozen=True, eq=False)
class AnalyticRecord:
    """Ground truth used by the analysis layer.

    ``lam`` and ``L`` refer to the network objective ``(1/n) sum_i F_i``;
    ``agent_L`` is the largest per-agent smoothness constant and ``alpha1`` a
    bound on every ``||hess F_i||_2``.
    """

    x_star: np.ndarray
    lam: float
    L: float
    alpha1: float
    agent_L: float
    alpha1_estimated: bool = False


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled samples split into contiguous per-agent row ranges."""

    features: np.ndarray
    labels: np.ndarray
    partition: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=float)
        labels = np.array(self.labels, dtype=float)
        if features.ndim != 2:
            raise ValueError(f"features must be a matrix, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must hold one value per feature row")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        partition = tuple((int(a), int(b)) for a, b in self.partition) or ((0, features.shape[0]),)
        cursor = 0
        for start, stop in partition:
            if start != cursor or stop < start:
                raise ValueError("partition must be disjoint, ordered and contiguous")
            cursor = stop
        if cursor != features.shape[0]:
            raise ValueError("partition must cover all rows")
        object.__setattr__(self, "partition", partition)

    @property
    def m(self) -> int:
        """Total number of rows."""
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        """Feature dimension."""
        return self.features.shape[1]

    def split(self, n_agents: int) -> Dataset:
        """Partition rows equally; the remainder goes to the first agents."""
        if n_agents < 1:
            raise ValueError(f"n_agents must be positive, got {n_agents}")
        base, extra = divmod(self.m, n_agents)
        bounds, cursor = [], 0
        for i in range(n_agents):
            size = base + (1 if i < extra else 0)
            bounds.append((cursor, cursor + size))
            cursor += size
        return Dataset(self.features, self.labels, tuple(bounds))

    def rows(self, agent: int) -> tuple[np.ndarray, np.ndarray]:
        """Features and labels held by ``agent``."""
        start, stop = self.partition[agent]
        return self.features[start:stop], self.labels[start:stop]


class Objective(ABC):
    """A network of local objectives queried one noisy value at a time."""

    kind: str = "abstract"
    noise: NoiseSpec
    analytic: Optional[AnalyticRecord]

    @property
    @abstractmethod
    def n_agents(self) -> int:
        """Number of agents."""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Decision variable dimension."""

    @abstractmethod
    def sample_process(
        self, rng: np.random.Generator, agent: int, size: Optional[int] = None
    ) -> np.ndarray:
        """Draw the process ``S`` for ``agent`` (``size`` independent draws if given)."""

    @abstractmethod
    def evaluate(self, agent: int, x: np.ndarray, s: np.ndarray) -> float:
        """Return ``f_i(x, S)`` for one process draw."""

    @abstractmethod
    def evaluate_stack(self, points: np.ndarray, s_stack: Sequence[np.ndarray]) -> np.ndarray:
        """Return ``f_i(points[i], s_stack[i])`` for every agent."""

    def evaluate_batch(self, agent: int, points: np.ndarray, s_batch: np.ndarray) -> np.ndarray:
        """Return ``f_i(points[r], s_batch[r])`` for every row ``r``."""
        return np.array([self.evaluate(agent, p, s) for p, s in zip(points, s_batch)])

    @abstractmethod
    def expected_value(self, agent: int, x: np.ndarray) -> float:
        """Return ``F_i(x) = E_S f_i(x, S)``."""

    def gradient(self, agent: int, x: np.ndarray) -> np.ndarray:
        """Return ``grad F_i(x)``."""
        raise NoAnalyticGradientError(f"no analytic gradient for {self.kind} objective")

    def hessian(self, agent: int, x: np.ndarray) -> np.ndarray:
        """Return ``hess F_i(x)``."""
        raise NoAnalyticGradientError(f"no analytic Hessian for {self.kind} objective")

    def gradient_stack(self, x_stack: np.ndarray) -> np.ndarray:
        """Row ``i`` is ``grad F_i(x_stack[i])``."""
        return np.stack([self.gradient(i, x_stack[i]) for i in range(self.n_agents)])

    def loss(self, x: np.ndarray) -> float:
        """Network objective ``(1/n) sum_i F_i(x)``."""
        return float(np.mean([self.expected_value(i, x) for i in range(self.n_agents)]))

    def mean_gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the network objective at a single point."""
        return self.gradient_stack(np.tile(x, (self.n_agents, 1))).mean(axis=0)


@dataclass(frozen=True, eq=False)
class QuadraticObjective(Objective):
    """``F_i(x) = 1/2 (x - c_i)^T Q_i (x - c_i)`` under a mean-one multiplicative process.

    ``f_i(x, S) = F_i(x) * s`` with ``s ~ Normal(1, process_variance)``, so
    ``E_S f_i = F_i`` exactly.
    """

    q: np.ndarray
    c: np.ndarray
    process_variance: float = 1e-4
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    analytic: Optional[AnalyticRecord] = None
    kind: str = field(default="quadratic", init=False)

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=float)
        c = np.array(self.c, dtype=float)
        if q.ndim != 3 or q.shape[1] != q.shape[2] or c.shape != q.shape[:2]:
            raise ValueError(f"expected q (n, d, d) and c (n, d), got {q.shape} and {c.shape}")
        if not np.allclose(q, np.transpose(q, (0, 2, 1))):
            raise ValueError("every Q_i must be symmetric")
        if self.process_variance < 0:
            raise ValueError("process_variance must be nonnegative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c", c)
        if self.analytic is None:
            object.__setattr__(self, "analytic", self._analytic_record())

    def _analytic_record(self) -> AnalyticRecord:
        q_sum = self.q.sum(axis=0)
        x_star = np.linalg.solve(q_sum, np.einsum("nij,nj->i", self.q, self.c))
        mean_eigs = np.linalg.eigvalsh(q_sum / self.n_agents)
        agent_L = float(max(np.linalg.eigvalsh(qi)[-1] for qi in self.q))
        if mean_eigs[0] <= 0:
            raise ValueError("mean Hessian is not positive definite")
        return AnalyticRecord(
            x_star=x_star,
            lam=float(mean_eigs[0]),
            L=float(mean_eigs[-1]),
            alpha1=agent_L,
            agent_L=agent_L,
        )

    @property
    def n_agents(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    def sample_process(self, rng, agent, size=None):
        return 1.0 + np.sqrt(self.process_variance) * rng.standard_normal(size)

    def expected_value(self, agent, x):
        diff = np.asarray(x, dtype=float) - self.c[agent]
        return float(0.5 * diff @ self.q[agent] @ diff)

    def evaluate(self, agent, x, s):
        return self.expected_value(agent, x) * float(s)

    def evaluate_stack(self, points, s_stack):
        diff = points - self.c
        values = 0.5 * np.einsum("ni,nij,nj->n", diff, self.q, diff)
        return values * np.asarray(s_stack, dtype=float)

    def evaluate_batch(self, agent, points, s_batch):
        diff = np.asarray(points, dtype=float) - self.c[agent]
        values = 0.5 * np.einsum("ri,ij,rj->r", diff, self.q[agent], diff)
        return values * np.asarray(s_batch, dtype=float)

    def gradient(self, agent, x):
        return self.q[agent] @ (np.asarray(x, dtype=float) - self.c[agent])

    def hessian(self, agent, x):
        return self.q[agent].copy()

    def gradient_stack(self, x_stack):
        return np.einsum("nij,nj->ni", self.q, x_stack - self.c)

    def loss(self, x):
        diff = np.asarray(x, dtype=float) - self.c
        return float(0.5 * np.einsum("ni,nij,nj->n", diff, self.q, diff).mean())


def _random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def make_quadratic(
    n: int,
    d: int,
    condition: float,
    seed: int,
    process_variance: float = 1e-4,
    noise_variance: float = 0.0,
    center_spread: float = 1.0,
) -> QuadraticObjective:
    """Random strongly convex quadratics with Hessian eigenvalues in ``[1, condition]``.

    Centers ``c_i`` are uniform in ``[-center_spread, center_spread]^d``.
    """
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be positive, got n={n}, d={d}")
    if center_spread < 0:
        raise ValueError(f"center_spread must be nonnegative, got {center_spread}")
    if condition < 1:
        raise ValueError(f"condition must be at least 1, got {condition}")
    rng = np.random.default_rng(seed)
    q = np.empty((n, d, d))
    c = rng.uniform(-center_spread, center_spread, size=(n, d))
    for i in range(n):
        u = _random_rotation(rng, d)
        eigs = rng.uniform(1.0, condition, size=d)
        q[i] = (u * eigs) @ u.T
    q = 0.5 * (q + np.transpose(q, (0, 2, 1)))
    return QuadraticObjective(
        q=q, c=c, process_variance=process_variance, noise=NoiseSpec(noise_variance)
    )


@dataclass(frozen=True, eq=False)
class LogisticObjective(Objective):
    """Regularized logistic loss with a multiplicative margin perturbation.

    ``f_i(theta, S) = (1/m) sum_{j in agent i} ln(1 + exp(-u_j y_j X_j^T theta)) + c ||theta||^2``
    with ``u_j ~ Normal(1, sigma_u)`` redrawn at every query. The inner sum is
    normalized by the global row count ``m``. Derivatives are those of the
    ``u = 1`` surrogate.
    """

    data: Dataset
    c_reg: float = 0.1
    sigma_u: float = 0.01
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    analytic: Optional[AnalyticRecord] = None
    kind: str = field(default="logistic", init=False)

    def __post_init__(self) -> None:
        if self.c_reg <= 0:
            raise ValueError(f"c_reg must be positive, got {self.c_reg}")
        if self.sigma_u < 0:
            raise ValueError(f"sigma_u must be nonnegative, got {self.sigma_u}")
        sizes = [stop - start for start, stop in self.data.partition]
        if any(size == 0 for size in sizes):
            raise ValueError("every agent needs a nonempty partition")
        object.__setattr__(self, "_starts", np.array([s for s, _ in self.data.partition]))
        object.__setattr__(
            self, "_row_agent", np.repeat(np.arange(len(sizes)), sizes)
        )
        if self.analytic is None:
            object.__setattr__(self, "analytic", self._analytic_record())

    @property
    def n_agents(self) -> int:
        return len(self.data.partition)

    @property
    def dim(self) -> int:
        return self.data.dim

    def _agent_size(self, agent: int) -> int:
        start, stop = self.data.partition[agent]
        return stop - start

    def sample_process(self, rng, agent, size=None):
        shape = (self._agent_size(agent),) if size is None else (size, self._agent_size(agent))
        return rng.normal(1.0, self.sigma_u, size=shape)

    def evaluate(self, agent, x, s):
        features, labels = self.data.rows(agent)
        margins = labels * (features @ x)
        data_term = np.logaddexp(0.0, -np.asarray(s) * margins).sum() / self.data.m
        return float(data_term + self.c_reg * x @ x)

    def evaluate_stack(self, points, s_stack):
        u = np.concatenate([np.atleast_1d(s) for s in s_stack])
        margins = self.data.labels * np.einsum(
            "md,md->m", self.data.features, points[self._row_agent]
        )
        per_row = np.logaddexp(0.0, -u * margins)
        data_term = np.add.reduceat(per_row, self._starts) / self.data.m
        return data_term + self.c_reg * np.einsum("nd,nd->n", points, points)

    def evaluate_batch(self, agent, points, s_batch):
        features, labels = self.data.rows(agent)
        points = np.asarray(points, dtype=float)
        margins = (points @ features.T) * labels
        data_term = np.logaddexp(0.0, -np.asarray(s_batch) * margins).sum(axis=1) / self.data.m
        return data_term + self.c_reg * np.einsum("rd,rd->r", points, points)

    def expected_value(self, agent, x):
        return self.evaluate(agent, np.asarray(x, dtype=float), np.ones(self._agent_size(agent)))

    def gradient(self, agent, x):
        x = np.asarray(x, dtype=float)
        features, labels = self.data.rows(agent)
        weights = -labels * expit(-labels * (features @ x))
        return features.T @ weights / self.data.m + 2.0 * self.c_reg * x

    def hessian(self, agent, x):
        x = np.asarray(x, dtype=float)
        features, _ = self.data.rows(agent)
        z = features @ x
        curvature = expit(z) * expit(-z)
        return (features.T * curvature) @ features / self.data.m + 2.0 * self.c_reg * np.eye(self.dim)

    def _mean_hessian(self, x: np.ndarray) -> np.ndarray:
        return np.mean([self.hessian(i, x) for i in range(self.n_agents)], axis=0)

    def _analytic_record(self) -> AnalyticRecord:
        result = optimize.minimize(
            self.loss,
            x0=np.zeros(self.dim),
            jac=self.mean_gradient,
            hess=self._mean_hessian,
            method="trust-exact",
            options={"gtol": 1e-10},
        )
        if not result.success:
            logger.warning("centralized solver stopped early: %s", result.message)
        m, n = self.data.m, self.n_agents
        gram_norm = np.linalg.eigvalsh(self.data.features.T @ self.data.features)[-1]
        agent_L = max(
            np.linalg.eigvalsh(f.T @ f)[-1] / (4.0 * m) + 2.0 * self.c_reg
            for f, _ in (self.data.rows(i) for i in range(n))
        )
        return AnalyticRecord(
            x_star=np.asarray(result.x),
            lam=2.0 * self.c_reg,
            L=float(gram_norm / (4.0 * n * m) + 2.0 * self.c_reg),
            alpha1=float(agent_L),
            agent_L=float(agent_L),
        )


def make_logistic(
    data: Dataset, c_reg: float, sigma_u: float, noise: NoiseSpec
) -> LogisticObjective:
    """Build the logistic objective; ``x*`` is solved once at construction."""
    return LogisticObjective(data=data, c_reg=c_reg, sigma_u=sigma_u, noise=noise)


def query(obj: Objective, agent: int, x: np.ndarray, rng: np.random.Generator) -> float:
    """One noisy function value ``f_i(x, S) + zeta`` with fresh ``S`` and ``zeta``.

    ``S`` is drawn before ``zeta`` from the same generator.
    """
    if not 0 <= agent < obj.n_agents:
        raise ValueError(f"agent {agent} outside 0..{obj.n_agents - 1}")
    x = np.asarray(x, dtype=float)
    if x.shape != (obj.dim,):
        raise ValueError(f"x must have shape ({obj.dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    s = obj.sample_process(rng, agent)
    zeta = obj.noise.sample(rng)
    return obj.evaluate(agent, x, s) + float(zeta)


def true_mean_gradient(obj: Objective, x_stack: np.ndarray) -> np.ndarray:
    """``h(x) = (1/n) sum_i grad F_i(x_i)``."""
    x_stack = np.asarray(x_stack, dtype=float)
    if x_stack.shape != (obj.n_agents, obj.dim):
        raise ValueError(f"x_stack must have shape ({obj.n_agents}, {obj.dim}), got {x_stack.shape}")
    return obj.gradient_stack(x_stack).mean(axis=0)


def hessian_norm_bound(
    obj: Objective, samples: int, box: float, rng: np.random.Generator
) -> float:
    """Largest ``||hess F_i(x)||_2`` over agents and ``samples`` points uniform in ``[-box, box]^d``."""
    best = 0.0
    for x in rng.uniform(-box, box, size=(samples, obj.dim)):
        for agent in range(obj.n_agents):
            best = max(best, float(np.linalg.norm(obj.hessian(agent, x), 2)))
    return best
