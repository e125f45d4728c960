"""Synchronous gradient-tracking rounds.

Compact form of one round, with ``W`` the mixing matrix and stacked agent
variables ``x, y, g`` of shape ``(n, d)``::

    x_{k+1} = W (x_k - alpha_k y_k)
    y_{k+1} = W y_k + g_{k+1} - g_k

``onepoint_dsgt`` builds ``g`` from one noisy query per agent at the perturbed
point ``x_{i,k+1} + gamma_{k+1} phi_{i,k+1}``; ``dsgt_noisygrad`` uses the exact
gradient plus Gaussian noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from onepoint_dsgt.errors import DivergenceError
from onepoint_dsgt.metrics import RunCallback, RunTrace, TraceRecorder
from onepoint_dsgt.objective import Dataset, Objective
from onepoint_dsgt.topology import MixingMatrix
from onepoint_dsgt.utils import AgentStreams, BlockSampler
from onepoint_dsgt.zo_estimator import (
    PerturbationSpec,
    Schedule,
    estimate_stack,
    sample_perturbations,
)

logger = logging.getLogger(__name__)

Algorithm = Literal["onepoint_dsgt", "dsgt_noisygrad"]
ALGORITHMS: tuple[str, ...] = ("onepoint_dsgt", "dsgt_noisygrad")

DIVERGENCE_THRESHOLD = 1e12
BLOCK_ROUNDS = 512


@dataclass(frozen=True)
class AlgoConfig:
    """Algorithm choice with its step sizes, randomness and horizon."""

    algorithm: Algorithm
    schedule: Schedule
    perturbation: Optional[PerturbationSpec] = None
    grad_noise_std: float = 1.0
    seed: int | np.random.SeedSequence = 0
    max_iters: int = 1000
    x0_box: float = 0.5
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.algorithm == "onepoint_dsgt" and self.perturbation is None:
            raise ValueError("onepoint_dsgt needs a perturbation spec")
        if self.grad_noise_std < 0:
            raise ValueError(f"grad_noise_std must be nonnegative, got {self.grad_noise_std}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be nonnegative, got {self.max_iters}")
        if self.x0_box < 0:
            raise ValueError(f"x0_box must be nonnegative, got {self.x0_box}")


class RoundRandomness:
    """Per-agent, per-role random streams consumed one round at a time."""

    def __init__(self, obj: Objective, cfg: AlgoConfig, block: int = BLOCK_ROUNDS):
        n, d = obj.n_agents, obj.dim
        self.streams = AgentStreams(cfg.seed, n)
        self._phi: list[BlockSampler] = []
        self._process: list[BlockSampler] = []
        self._noise: list[BlockSampler] = []
        for i in range(n):
            if cfg.algorithm == "onepoint_dsgt":
                assert cfg.perturbation is not None
                spec = cfg.perturbation
                self._phi.append(
                    BlockSampler(
                        self.streams.rng(i, "perturbation"),
                        lambda r, b, spec=spec: sample_perturbations(spec, r, b),
                        block,
                    )
                )
                self._process.append(
                    BlockSampler(
                        self.streams.rng(i, "process"),
                        lambda r, b, i=i: obj.sample_process(r, i, size=b),
                        block,
                    )
                )
                self._noise.append(
                    BlockSampler(
                        self.streams.rng(i, "noise"),
                        lambda r, b: np.asarray(obj.noise.sample(r, b)),
                        block,
                    )
                )
            else:
                std = cfg.grad_noise_std
                self._noise.append(
                    BlockSampler(
                        self.streams.rng(i, "noise"),
                        lambda r, b, std=std: std * r.standard_normal((b, d)),
                        block,
                    )
                )

    def initial_points(self, n: int, d: int, box: float) -> np.ndarray:
        """Rows uniform in ``[-box, box]^d``, one per agent from its ``init`` stream."""
        return np.stack([self.streams.rng(i, "init").uniform(-box, box, size=d) for i in range(n)])

    def perturbations(self) -> np.ndarray:
        return np.stack([s.next() for s in self._phi])

    def processes(self) -> list[np.ndarray]:
        return [s.next() for s in self._process]

    def noises(self) -> np.ndarray:
        return np.stack([s.next() for s in self._noise])


@dataclass(frozen=True, eq=False)
class SwarmState:
    """Stacked agent variables after round ``k``.

    ``g_prev`` holds the estimates of round ``k``; ``randomness`` is the shared
    stream source advanced by every ``step``.
    """

    k: int
    x: np.ndarray
    y: np.ndarray
    g_prev: np.ndarray
    randomness: Optional[RoundRandomness] = field(default=None, repr=False)


def _estimates(
    obj: Objective, cfg: AlgoConfig, randomness: RoundRandomness, x: np.ndarray, gamma: float
) -> np.ndarray:
    if cfg.algorithm == "onepoint_dsgt":
        return estimate_stack(
            obj, x, gamma, randomness.perturbations(), randomness.processes(), randomness.noises()
        )
    return obj.gradient_stack(x) + randomness.noises()


def _check_finite(k: int, threshold: float, *arrays: np.ndarray) -> None:
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise DivergenceError(k, "non-finite entry in the swarm state")
        peak = float(np.max(np.abs(array)))
        if peak > threshold:
            raise DivergenceError(k, f"entry magnitude {peak:.3e} exceeds {threshold:.1e}")


def init(
    obj: Objective, w: MixingMatrix, cfg: AlgoConfig, x0_box: Optional[float] = None
) -> SwarmState:
    """Round 0: uniform ``x_0``, one estimate per agent at ``gamma_0``, and ``y_0 = g_0``.

    Raises:
        ValueError: If ``w``, the objective and the perturbation disagree on dimensions.
    """
    if w.n != obj.n_agents:
        raise ValueError(f"dimension mismatch: W is {w.n}x{w.n}, objective has {obj.n_agents} agents")
    if cfg.perturbation is not None and cfg.perturbation.dim != obj.dim:
        raise ValueError(
            f"dimension mismatch: perturbation dim {cfg.perturbation.dim}, objective dim {obj.dim}"
        )
    box = cfg.x0_box if x0_box is None else x0_box
    randomness = RoundRandomness(obj, cfg)
    x0 = randomness.initial_points(obj.n_agents, obj.dim, box)
    g0 = _estimates(obj, cfg, randomness, x0, float(cfg.schedule.gamma(0)))
    return SwarmState(k=0, x=x0, y=g0.copy(), g_prev=g0, randomness=randomness)


def step(state: SwarmState, obj: Objective, w: MixingMatrix, cfg: AlgoConfig) -> SwarmState:
    """Advance one synchronous round.

    Raises:
        DivergenceError: If any entry becomes non-finite or exceeds the divergence threshold.
    """
    if state.randomness is None:
        raise ValueError("state carries no random streams; build it with init()")
    alpha_k = float(cfg.schedule.alpha(state.k))
    gamma_next = float(cfg.schedule.gamma(state.k + 1))
    x_next = w.w @ (state.x - alpha_k * state.y)
    g_next = _estimates(obj, cfg, state.randomness, x_next, gamma_next)
    y_next = w.w @ state.y + g_next - state.g_prev
    _check_finite(state.k + 1, cfg.divergence_threshold, x_next, y_next)
    return SwarmState(
        k=state.k + 1, x=x_next, y=y_next, g_prev=g_next, randomness=state.randomness
    )


def run(
    obj: Objective,
    w: MixingMatrix,
    cfg: AlgoConfig,
    callbacks: Sequence[RunCallback] = (),
    stride: int = 1,
    test_data: Optional[Dataset] = None,
) -> RunTrace:
    """Iterate ``cfg.max_iters`` rounds, logging every ``stride`` rounds plus the last one.

    Raises:
        DivergenceError: With the partial trace attached as ``trace``.
    """
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    recorder = TraceRecorder(obj, test_data=test_data)
    hooks: list[RunCallback] = [recorder, *callbacks]
    state = init(obj, w, cfg)
    try:
        while True:
            for hook in hooks:
                hook.on_round(state)
            if state.k % stride == 0 or state.k == cfg.max_iters:
                for hook in hooks:
                    hook.on_record(state)
                logger.debug("round %d divergence %.3e", state.k, recorder.trace.records[-1].divergence)
            if state.k >= cfg.max_iters:
                break
            state = step(state, obj, w, cfg)
    except DivergenceError as exc:
        logger.error("%s; keeping %d logged rounds", exc, len(recorder.trace))
        exc.trace = recorder.trace
        raise
    return recorder.trace


class BoundsProbe(RunCallback):
    """Empirical maxima a pilot run feeds into the theory constants.

    Tracks ``max ||gbar_k||^2``, ``max ||y_k - 1 ybar_k||`` and
    ``R = ||x_0 - 1 xbar_0||^2``.
    """

    def __init__(self) -> None:
        self.max_mean_grad_sq = 0.0
        self.max_tracking_dev = 0.0
        self.initial_consensus: float | None = None
        self.rounds = 0

    def on_round(self, state: SwarmState) -> None:
        if self.initial_consensus is None:
            self.initial_consensus = float(np.sum((state.x - state.x.mean(axis=0)) ** 2))
        g_bar = state.g_prev.mean(axis=0)
        self.max_mean_grad_sq = max(self.max_mean_grad_sq, float(g_bar @ g_bar))
        self.max_tracking_dev = max(
            self.max_tracking_dev, float(np.linalg.norm(state.y - state.y.mean(axis=0)))
        )
        self.rounds += 1
