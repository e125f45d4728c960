"""One-point zero-order gradient estimate and its step-size schedules."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from onepoint_dsgt.objective import Objective, query

EXPONENT_TOL = 1e-12
MAX_ENUMERATION_DIM = 12


@dataclass(frozen=True)
class Schedule:
    """``alpha_k = alpha0 (k+1)^-upsilon1`` and ``gamma_k = gamma0 (k+1)^-upsilon2``.

    Requires ``0.5 < upsilon1 < 1`` and ``0 < upsilon2 <= 1 - upsilon1``.
    """

    alpha0: float
    upsilon1: float
    gamma0: float
    upsilon2: float

    def __post_init__(self) -> None:
        if self.alpha0 <= 0 or self.gamma0 <= 0:
            raise ValueError(f"alpha0 and gamma0 must be positive, got {self.alpha0}, {self.gamma0}")
        if not 0.5 < self.upsilon1 < 1.0:
            raise ValueError(f"upsilon1 must lie in (0.5, 1), got {self.upsilon1}")
        if not 0.0 < self.upsilon2 <= 1.0 - self.upsilon1 + EXPONENT_TOL:
            raise ValueError(
                f"upsilon2 must lie in (0, 1 - upsilon1] = (0, {1.0 - self.upsilon1:g}], got {self.upsilon2}"
            )

    def alpha(self, k):
        """Descent step ``alpha_k``; accepts scalars or arrays of ``k``."""
        return self.alpha0 * np.power(np.asarray(k, dtype=float) + 1.0, -self.upsilon1)

    def gamma(self, k):
        """Perturbation radius ``gamma_k``; accepts scalars or arrays of ``k``."""
        return self.gamma0 * np.power(np.asarray(k, dtype=float) + 1.0, -self.upsilon2)

    @property
    def rate_exponent(self) -> float:
        """Guaranteed decay exponent ``min{2 upsilon2, upsilon1 - upsilon2}`` of the divergence."""
        return min(2.0 * self.upsilon2, self.upsilon1 - self.upsilon2)

    def satisfies_rate_condition(self, a_const: float) -> bool:
        """Sufficient condition ``alpha0 gamma0 >= max{2 upsilon2, upsilon1 - upsilon2} / A``."""
        needed = max(2.0 * self.upsilon2, self.upsilon1 - self.upsilon2) / a_const
        return self.alpha0 * self.gamma0 >= needed


@dataclass(frozen=True)
class PerturbationSpec:
    """Scaled symmetric Bernoulli directions: coordinates ``+-scale/sqrt(dim)``."""

    dim: int
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def alpha2(self) -> float:
        """Second moment of each coordinate."""
        return self.scale**2 / self.dim

    @property
    def alpha3(self) -> float:
        """Norm of every direction."""
        return self.scale

    @property
    def magnitude(self) -> float:
        """Absolute value of every coordinate."""
        return self.scale / np.sqrt(self.dim)


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """``g = phi * f_value`` from a single query at ``probe_point = x + gamma phi``."""

    g: np.ndarray
    probe_point: np.ndarray
    phi: np.ndarray
    f_value: float


def sample_perturbation(spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    """One direction with i.i.d. equiprobable coordinates ``+-scale/sqrt(d)``."""
    return spec.magnitude * (2.0 * rng.integers(0, 2, size=spec.dim) - 1.0)


def sample_perturbations(
    spec: PerturbationSpec, rng: np.random.Generator, size: int
) -> np.ndarray:
    """``size`` directions stacked row-wise."""
    return spec.magnitude * (2.0 * rng.integers(0, 2, size=(size, spec.dim)) - 1.0)


def estimate(
    obj: Objective,
    agent: int,
    x: np.ndarray,
    gamma_k: float,
    spec: PerturbationSpec,
    rng: np.random.Generator,
) -> GradientEstimate:
    """Draw ``phi``, query the oracle once at ``x + gamma_k phi`` and return ``phi * f``."""
    if gamma_k <= 0:
        raise ValueError(f"gamma_k must be positive, got {gamma_k}")
    phi = sample_perturbation(spec, rng)
    probe = np.asarray(x, dtype=float) + gamma_k * phi
    f_value = query(obj, agent, probe, rng)
    return GradientEstimate(
        g=one_point_gradient(phi, f_value), probe_point=probe, phi=phi, f_value=f_value
    )


def one_point_gradient(phi: np.ndarray, f_values) -> np.ndarray:
    """Scale each direction by its own query value: ``phi_i * f_i``."""
    return np.asarray(phi, dtype=float) * np.asarray(f_values, dtype=float)[..., None]


def estimate_stack(
    obj: Objective,
    x: np.ndarray,
    gamma: float,
    phi: np.ndarray,
    processes: Sequence[np.ndarray],
    noise: np.ndarray,
) -> np.ndarray:
    """One-point estimates for every agent from pre-drawn ``phi``, ``S`` and ``zeta``.

    Row ``i`` is ``phi_i (f_i(x_i + gamma phi_i, S_i) + zeta_i)``; every agent
    queries its oracle exactly once.
    """
    values = obj.evaluate_stack(x + gamma * phi, processes) + noise
    return one_point_gradient(phi, values)


def step_sizes(s: Schedule, k: int) -> tuple[float, float]:
    """Return ``(alpha_k, gamma_k)``."""
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    return float(s.alpha(k)), float(s.gamma(k))


def bias_bound(gamma_k: float, spec: PerturbationSpec, alpha1: float) -> float:
    """Bound ``gamma_k alpha3^3 alpha1 / (2 alpha2)`` on the estimator bias."""
    if alpha1 < 0:
        raise ValueError(f"alpha1 must be nonnegative, got {alpha1}")
    return gamma_k * spec.alpha3**3 * alpha1 / (2.0 * spec.alpha2)


@lru_cache(maxsize=None)
def sign_patterns(dim: int) -> np.ndarray:
    """All ``2^dim`` vectors in ``{-1, +1}^dim``."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=dim)))


def exact_conditional_mean(
    obj: Objective, agent: int, x: np.ndarray, gamma: float, spec: PerturbationSpec
) -> np.ndarray:
    """``E[g | x]`` by enumerating every sign pattern of ``phi``.

    The process and the query noise are averaged out analytically through
    ``F_i``.
    """
    if spec.dim > MAX_ENUMERATION_DIM:
        raise ValueError(f"exact enumeration limited to dim <= {MAX_ENUMERATION_DIM}, got {spec.dim}")
    phis = spec.magnitude * sign_patterns(spec.dim)
    x = np.asarray(x, dtype=float)
    values = np.array([obj.expected_value(agent, x + gamma * phi) for phi in phis])
    return (phis * values[:, None]).mean(axis=0)


def second_moment_bound(
    spec: PerturbationSpec,
    gamma: float,
    x_norm: float,
    mu: float,
    l_prime: float,
    noise_variance: Optional[float] = 0.0,
) -> float:
    """``2 alpha3^2 (mu + L' (||x|| + gamma alpha3)^2) + alpha3^2 alpha4``."""
    radius = x_norm + gamma * spec.alpha3
    return 2.0 * spec.alpha3**2 * (mu + l_prime * radius**2) + spec.alpha3**2 * (noise_variance or 0.0)
