"""Theory-side quantities computed from runs and schedules.

Trace metrics live in ``metrics`` and are re-exported here. This module adds
the ``beta_k``/``delta_k`` sequences, the iteration thresholds, log-log rate
fits and the Monte-Carlo probes of the estimator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

from onepoint_dsgt.engine import AlgoConfig, init, step
from onepoint_dsgt.metrics import (
    IterationRecord,
    RunTrace,
    TraceRecorder,
    accuracy,
    average_traces,
    consensus_error,
    divergence,
)
from onepoint_dsgt.objective import Objective
from onepoint_dsgt.topology import MixingMatrix
from onepoint_dsgt.zo_estimator import (
    MAX_ENUMERATION_DIM,
    PerturbationSpec,
    Schedule,
    bias_bound,
    exact_conditional_mean,
    one_point_gradient,
    sample_perturbations,
    second_moment_bound,
)

logger = logging.getLogger(__name__)

__all__ = [
    "BiasProbe",
    "IterationRecord",
    "LipschitzEstimate",
    "MartingaleNoiseProbe",
    "RunTrace",
    "SecondMomentProbe",
    "TraceRecorder",
    "accuracy",
    "average_traces",
    "beta_envelope",
    "beta_sequence",
    "bias_probe",
    "consensus_error",
    "divergence",
    "estimate_lipschitz",
    "estimate_upsilon",
    "fit_loglog",
    "geometric_threshold",
    "k1_closed_form",
    "loglog_slope",
    "martingale_noise_probe",
    "rate_window",
    "regret_envelope",
    "second_moment_probe",
    "thresholds",
]

SCAN_CAP = 10_000_000
SCAN_CHUNK = 100_000
MIN_FIT_POINTS = 10
FIT_POINTS = 200
PROBE_CHUNK = 65_536


def _contraction(rho_w: float) -> float:
    if not 0.0 <= rho_w < 1.0:
        raise ValueError(f"rho_w must lie in [0, 1), got {rho_w}")
    return (1.0 + rho_w**2) / 2.0


def beta_sequence(rho_w: float, schedule: Schedule, k_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(beta, delta)`` for ``k = 0..k_max``.

    ``beta_{k+1} = q (beta_k + alpha_k^2)`` with ``beta_0 = 0`` and
    ``delta_k = q^k``, where ``q = (1 + rho_w^2) / 2``.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    q = _contraction(rho_w)
    alpha_sq = schedule.alpha(np.arange(k_max)) ** 2
    beta = np.zeros(k_max + 1)
    beta[1:] = signal.lfilter([q], [1.0, -q], alpha_sq)
    delta = np.power(q, np.arange(k_max + 1, dtype=float))
    return beta, delta


def _first_true(predicate, cap: int, what: str) -> int:
    for start in range(0, cap, SCAN_CHUNK):
        ks = np.arange(start, min(start + SCAN_CHUNK, cap))
        hits = np.flatnonzero(predicate(ks))
        if hits.size:
            return int(ks[hits[0]])
    raise ValueError(f"{what} not reached within a scan of {cap} iterations")


def thresholds(
    a_const: float, schedule: Schedule, rho_w: float, scan_cap: int = SCAN_CAP
) -> tuple[int, int, int]:
    """Return ``(K0, K1, K2)``.

    ``K0`` is the first ``k`` with ``A alpha_k gamma_k < 1``, ``K1`` the first
    ``k`` with ``q^k <= alpha_k^2`` and ``K2 = max(K0, K1)``.

    Raises:
        ValueError: If ``A <= 0`` or a threshold lies beyond ``scan_cap``.
    """
    if a_const <= 0:
        raise ValueError(f"A must be positive, got {a_const}")
    k0 = _first_true(
        lambda ks: a_const * schedule.alpha(ks) * schedule.gamma(ks) < 1.0, scan_cap, "K0"
    )
    k1 = geometric_threshold(schedule, rho_w, scan_cap)
    return k0, k1, max(k0, k1)


def geometric_threshold(schedule: Schedule, rho_w: float, scan_cap: int = SCAN_CAP) -> int:
    """First ``k`` with ``((1 + rho_w^2) / 2)^k <= alpha_k^2``."""
    log_q = np.log(_contraction(rho_w))
    # log space: q^k underflows long before alpha_k^2 does
    return _first_true(
        lambda ks: ks * log_q <= 2.0 * np.log(schedule.alpha(ks)), scan_cap, "K1"
    )


def k1_closed_form(rho_w: float) -> int:
    """Smallest ``k >= 1`` with ``2 / ln(2 / (1 + rho_w^2)) < k / ln(k + 1)``."""
    target = 2.0 / np.log(1.0 / _contraction(rho_w))
    return _first_true(
        lambda ks: (ks >= 1) & (ks / np.log(np.maximum(ks, 1) + 1.0) > target), SCAN_CAP, "K1"
    )


def beta_envelope(rho_w: float, schedule: Schedule, k) -> np.ndarray:
    """Explicit decay bound on ``beta_k``, valid for ``k >= K1``.

    ``alpha0^2 (beta' + beta'') / (k - K1 + 1)^(3 upsilon1 - 1)`` with ``K1``
    the scanned threshold.
    """
    q = _contraction(rho_w)
    k1 = max(geometric_threshold(schedule, rho_w), 1)
    ks = np.asarray(k, dtype=float)
    if np.any(ks < k1):
        raise ValueError(f"the beta envelope holds for k >= K1 = {k1}")
    u1 = schedule.upsilon1
    beta_p = ((1.0 + rho_w**2) / (1.0 - rho_w**2)) * (1.0 - q ** (k1 - 1))
    beta_pp = (4.0 / (k1 + 2.0) * np.log(np.e / k1) + 6.0 + 1.0 / k1) ** u1
    return schedule.alpha0**2 * (beta_p + beta_pp) / np.power(ks - k1 + 1.0, 3.0 * u1 - 1.0)


def fit_loglog(
    ks: np.ndarray,
    values: np.ndarray,
    k_lo: int,
    k_hi: int,
    points: int = FIT_POINTS,
) -> float:
    """Least-squares slope of ``log(values)`` against ``log(k)`` on ``[k_lo, k_hi]``.

    Points are subsampled geometrically so each decade weighs the same.
    Nonpositive values are dropped.

    Raises:
        ValueError: If fewer than ten usable points remain.
    """
    if k_lo < 1:
        raise ValueError(f"k_lo must be at least 1, got {k_lo}")
    if k_hi < k_lo:
        raise ValueError(f"empty window [{k_lo}, {k_hi}]")
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (ks >= k_lo) & (ks <= k_hi) & (values > 0) & np.isfinite(values)
    ks, values = ks[mask], values[mask]
    if ks.size >= MIN_FIT_POINTS:
        targets = np.geomspace(ks[0], ks[-1], num=points)
        picks = np.unique(np.clip(np.searchsorted(ks, targets), 0, ks.size - 1))
        ks, values = ks[picks], values[picks]
    if ks.size < MIN_FIT_POINTS:
        raise ValueError(
            f"window [{k_lo}, {k_hi}] holds {ks.size} usable points, need {MIN_FIT_POINTS}"
        )
    slope, _ = np.polyfit(np.log(ks), np.log(values), 1)
    return float(slope)


def loglog_slope(trace: RunTrace, field: str, k_lo: int, k_hi: int) -> float:
    """Fitted decay (or growth) exponent of one trace column."""
    return fit_loglog(trace.ks, trace.column(field), k_lo, k_hi)


def rate_window(k2: int, k_max: int, floor_fraction: float = 0.1) -> tuple[int, int]:
    """Fit window ``[max(K2, floor_fraction * k_max, 1), k_max]`` skipping transients."""
    k_lo = max(k2, int(floor_fraction * k_max), 1)
    logger.info("rate fits on k in [%d, %d] (K2 = %d)", k_lo, k_max, k2)
    return k_lo, k_max


def estimate_upsilon(trace: RunTrace, schedule: Schedule, k2: int) -> Optional[float]:
    """``max_{k >= K2} D_k (k + 1)^e`` with ``e`` the guaranteed decay exponent."""
    ks, d = trace.ks, trace.column("divergence")
    mask = ks >= k2
    if not np.any(mask):
        return None
    return float(np.max(d[mask] * np.power(ks[mask] + 1.0, schedule.rate_exponent)))


def regret_envelope(upsilon_hat: float, L: float, K: int) -> float:
    """Regret bound ``Upsilon L (sqrt(K + 1) - 1)``."""
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    return float(upsilon_hat * L * (np.sqrt(K + 1.0) - 1.0))


@dataclass(frozen=True, eq=False)
class BiasProbe:
    """Monte-Carlo bias of ``g / (alpha2 gamma)`` against ``grad F_i``."""

    bias: np.ndarray
    standard_error: np.ndarray
    bound: float
    samples: int

    @property
    def norm(self) -> float:
        """Euclidean norm of the empirical bias."""
        return float(np.linalg.norm(self.bias))

    def within_bound(self, n_se: float = 3.0) -> bool:
        """Whether ``||bias|| <= bound + n_se * ||SE||``."""
        return self.norm <= self.bound + n_se * float(np.linalg.norm(self.standard_error))


def _oracle_values(
    obj: Objective, agent: int, points: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    s_batch = obj.sample_process(rng, agent, size=points.shape[0])
    return obj.evaluate_batch(agent, points, s_batch) + obj.noise.sample(rng, points.shape[0])


def bias_probe(
    obj: Objective,
    x: np.ndarray,
    gamma: float,
    spec: PerturbationSpec,
    samples: int,
    rng: np.random.Generator,
    agent: int = 0,
    alpha1: Optional[float] = None,
) -> BiasProbe:
    """Empirical bias of the scaled one-point estimate at ``x``.

    ``alpha1`` defaults to the objective's analytic record.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if samples < 2:
        raise ValueError(f"need at least two samples, got {samples}")
    x = np.asarray(x, dtype=float)
    grad = obj.gradient(agent, x)
    if alpha1 is None:
        if obj.analytic is None:
            raise ValueError("alpha1 is required when the objective has no analytic record")
        alpha1 = obj.analytic.alpha1
    total = np.zeros(obj.dim)
    total_sq = np.zeros(obj.dim)
    done = 0
    while done < samples:
        size = min(PROBE_CHUNK, samples - done)
        phis = sample_perturbations(spec, rng, size)
        values = _oracle_values(obj, agent, x + gamma * phis, rng)
        scaled = one_point_gradient(phis, values) / (spec.alpha2 * gamma)
        total += scaled.sum(axis=0)
        total_sq += (scaled * scaled).sum(axis=0)
        done += size
    mean = total / samples
    variance = np.maximum(total_sq / samples - mean**2, 0.0) * samples / (samples - 1)
    return BiasProbe(
        bias=mean - grad,
        standard_error=np.sqrt(variance / samples),
        bound=bias_bound(gamma, spec, alpha1),
        samples=samples,
    )


@dataclass(frozen=True, eq=False)
class LipschitzEstimate:
    """Per-draw Lipschitz constants ``L_S`` of ``x -> f_i(x, S)`` on a box."""

    per_draw: np.ndarray

    @property
    def l_max(self) -> float:
        """Largest observed ``L_S``."""
        return float(np.max(self.per_draw))

    @property
    def l_prime(self) -> float:
        """Empirical ``E[L_S^2]``."""
        return float(np.mean(self.per_draw**2))


def estimate_lipschitz(
    obj: Objective,
    agent: int,
    box: float,
    pairs: int,
    rng: np.random.Generator,
    draws: int = 64,
) -> LipschitzEstimate:
    """Largest difference quotient over ``pairs`` point pairs per shared ``S`` draw."""
    if box <= 0 or pairs < 1 or draws < 1:
        raise ValueError("box, pairs and draws must be positive")
    per_draw = np.empty(draws)
    for r in range(draws):
        s = obj.sample_process(rng, agent)
        s_batch = np.broadcast_to(s, (pairs,) + np.shape(s))
        a = rng.uniform(-box, box, size=(pairs, obj.dim))
        b = rng.uniform(-box, box, size=(pairs, obj.dim))
        gaps = np.abs(obj.evaluate_batch(agent, a, s_batch) - obj.evaluate_batch(agent, b, s_batch))
        per_draw[r] = float(np.max(gaps / np.linalg.norm(a - b, axis=1)))
    return LipschitzEstimate(per_draw=per_draw)


@dataclass(frozen=True)
class SecondMomentProbe:
    """Empirical ``E||g||^2`` next to its boundedness-lemma bound."""

    empirical: float
    bound: float
    mu: float
    l_prime: float


def second_moment_probe(
    obj: Objective,
    x: np.ndarray,
    gamma: float,
    spec: PerturbationSpec,
    samples: int,
    rng: np.random.Generator,
    agent: int = 0,
    pairs: int = 256,
) -> SecondMomentProbe:
    """Compare ``E||g||^2`` at ``x`` with ``2 a3^2 (mu + L' (||x|| + gamma a3)^2) + a3^2 a4``.

    ``mu = E f_i(0, S)^2`` and ``L' = E L_S^2`` are estimated on the ball the
    probes can reach.
    """
    x = np.asarray(x, dtype=float)
    phis = sample_perturbations(spec, rng, samples)
    values = _oracle_values(obj, agent, x + gamma * phis, rng)
    empirical = float(np.mean(np.sum(phis**2, axis=1) * values**2))
    s_batch = obj.sample_process(rng, agent, size=samples)
    at_zero = obj.evaluate_batch(agent, np.zeros((samples, obj.dim)), s_batch)
    mu = float(np.mean(at_zero**2))
    radius = float(np.linalg.norm(x)) + gamma * spec.alpha3
    lipschitz = estimate_lipschitz(obj, agent, max(radius, 1e-6), pairs, rng)
    bound = second_moment_bound(
        spec, gamma, float(np.linalg.norm(x)), mu, lipschitz.l_prime, obj.noise.variance
    )
    return SecondMomentProbe(empirical=empirical, bound=bound, mu=mu, l_prime=lipschitz.l_prime)


@dataclass(frozen=True, eq=False)
class MartingaleNoiseProbe:
    """Noise ``e_k = gbar_k - mean_i E[g_{i,k} | x_{i,k}]`` along one run.

    ``partial_sums[k] = ||sum_{j<=k} alpha_j e_j||`` and ``tail_sup[k]`` is the
    largest ``||sum_{j=k..m} alpha_j e_j||`` over ``m >= k``.
    """

    ks: np.ndarray
    noise_norms: np.ndarray
    partial_sums: np.ndarray
    tail_sup: np.ndarray


def martingale_noise_probe(
    obj: Objective, w: MixingMatrix, cfg: AlgoConfig, k_max: int
) -> MartingaleNoiseProbe:
    """Run ``k_max`` rounds and measure the estimate noise against its conditional mean.

    Raises:
        ValueError: If the conditional mean needs more than 2^12 sign patterns.
    """
    if cfg.algorithm == "onepoint_dsgt" and obj.dim > MAX_ENUMERATION_DIM:
        raise ValueError(f"exact conditional mean limited to dim <= {MAX_ENUMERATION_DIM}")
    state = init(obj, w, cfg)
    noises, alphas = [], []
    for k in range(k_max + 1):
        if cfg.algorithm == "onepoint_dsgt":
            assert cfg.perturbation is not None
            gamma_k = float(cfg.schedule.gamma(k))
            cond = np.stack(
                [
                    exact_conditional_mean(obj, i, state.x[i], gamma_k, cfg.perturbation)
                    for i in range(obj.n_agents)
                ]
            )
        else:
            cond = obj.gradient_stack(state.x)
        noises.append(state.g_prev.mean(axis=0) - cond.mean(axis=0))
        alphas.append(float(cfg.schedule.alpha(k)))
        if k < k_max:
            state = step(state, obj, w, cfg)
    weighted = np.asarray(alphas)[:, None] * np.asarray(noises)
    cumulative = np.cumsum(weighted, axis=0)
    shifted = np.vstack([np.zeros((1, obj.dim)), cumulative[:-1]])
    tail_sup = np.array(
        [np.max(np.linalg.norm(cumulative[k:] - shifted[k], axis=1)) for k in range(k_max + 1)]
    )
    return MartingaleNoiseProbe(
        ks=np.arange(k_max + 1),
        noise_norms=np.linalg.norm(np.asarray(noises), axis=1),
        partial_sums=np.linalg.norm(cumulative, axis=1),
        tail_sup=tail_sup,
    )
