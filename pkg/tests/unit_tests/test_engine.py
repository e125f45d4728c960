"""Tests for the gradient-tracking rounds."""

import dataclasses
from unittest.mock import patch

import numpy as np
import pytest

from onepoint_dsgt.engine import BLOCK_ROUNDS, AlgoConfig, BoundsProbe, init, run, step
from onepoint_dsgt.errors import DivergenceError
from onepoint_dsgt.metrics import RunCallback, consensus_error
from onepoint_dsgt.objective import QuadraticObjective, make_quadratic
from onepoint_dsgt.topology import MixingMatrix, Topology, erdos_renyi, metropolis_weights
from onepoint_dsgt.utils import AgentStreams
from onepoint_dsgt.zo_estimator import PerturbationSpec, Schedule, sample_perturbations


class FrozenStep(Schedule):
    """A schedule whose descent step is always zero."""

    def alpha(self, k):
        return np.zeros_like(np.asarray(k, dtype=float))


class RoundCounter(RunCallback):
    def __init__(self):
        self.rounds = []
        self.records = []

    def on_round(self, state):
        self.rounds.append(state.k)

    def on_record(self, state):
        self.records.append(state.k)


@pytest.fixture
def objective():
    return make_quadratic(n=4, d=3, condition=2.0, seed=0, process_variance=1e-3, noise_variance=0.01)


@pytest.fixture
def mixing():
    return metropolis_weights(erdos_renyi(4, 0.8, seed=1))


@pytest.fixture
def schedule():
    return Schedule(alpha0=0.1, upsilon1=0.75, gamma0=0.5, upsilon2=0.25)


@pytest.fixture
def cfg(schedule):
    return AlgoConfig(
        algorithm="onepoint_dsgt",
        schedule=schedule,
        perturbation=PerturbationSpec(dim=3, scale=1.5),
        seed=7,
        max_iters=50,
    )


def _advance(objective, mixing, cfg, rounds):
    states = [init(objective, mixing, cfg)]
    for _ in range(rounds):
        states.append(step(states[-1], objective, mixing, cfg))
    return states


class TestAlgoConfig:
    """Test engine config validation."""

    def test_onepoint_needs_perturbation(self, schedule):
        with pytest.raises(ValueError, match="perturbation"):
            AlgoConfig(algorithm="onepoint_dsgt", schedule=schedule)

    def test_unknown_algorithm(self, schedule):
        with pytest.raises(ValueError, match="algorithm"):
            AlgoConfig(algorithm="sgd", schedule=schedule)

    def test_baseline_needs_no_perturbation(self, schedule):
        cfg = AlgoConfig(algorithm="dsgt_noisygrad", schedule=schedule)
        assert cfg.perturbation is None


class TestRounds:
    """Test the update rules of one round."""

    def test_tracking_variable_conserves_mean_estimate(self, objective, mixing, cfg):
        state = init(objective, mixing, cfg)
        for _ in range(10_000):
            y_bar, g_bar = state.y.mean(axis=0), state.g_prev.mean(axis=0)
            scale = max(np.linalg.norm(g_bar), np.abs(state.g_prev).max())
            assert np.linalg.norm(y_bar - g_bar) <= 1e-10 * scale
            state = step(state, objective, mixing, cfg)

    def test_mean_iterate_follows_mean_tracker(self, objective, mixing, cfg):
        state = init(objective, mixing, cfg)
        for k in range(10_000):
            alpha_k = float(cfg.schedule.alpha(k))
            expected = state.x.mean(axis=0) - alpha_k * state.y.mean(axis=0)
            state = step(state, objective, mixing, cfg)
            assert np.linalg.norm(state.x.mean(axis=0) - expected) <= 1e-10 * np.linalg.norm(expected)

    def test_consensus_contracts_each_round(self, objective, mixing, cfg):
        rho_sq = mixing.rho_w**2
        q = (1.0 + rho_sq) / 2.0
        tracking_gain = (1.0 + rho_sq) * rho_sq / (1.0 - rho_sq)
        state = init(objective, mixing, cfg)
        for k in range(2000):
            alpha_k = float(cfg.schedule.alpha(k))
            bound = q * consensus_error(state.x) + alpha_k**2 * tracking_gain * consensus_error(state.y)
            state = step(state, objective, mixing, cfg)
            slack = 1e-24 * float(np.sum(state.x**2))
            assert consensus_error(state.x) <= bound * (1.0 + 1e-12) + slack

    def test_each_agent_queries_once_per_round(self, objective, mixing, cfg):
        with patch.object(
            QuadraticObjective,
            "evaluate_stack",
            autospec=True,
            side_effect=QuadraticObjective.evaluate_stack,
        ) as oracle, patch.object(QuadraticObjective, "gradient_stack", autospec=True) as gradients:
            _advance(objective, mixing, cfg, 12)
        assert oracle.call_count == 13
        for call in oracle.call_args_list:
            _, points, processes = call.args
            assert points.shape == (objective.n_agents, objective.dim)
            assert len(processes) == objective.n_agents
        gradients.assert_not_called()

    def test_initial_points_in_box(self, objective, mixing, cfg):
        state = init(objective, mixing, cfg, x0_box=0.2)
        assert state.k == 0
        assert np.all(np.abs(state.x) <= 0.2)
        np.testing.assert_array_equal(state.y, state.g_prev)

    def test_single_agent_matches_zero_order_sgd(self, cfg):
        obj = make_quadratic(n=1, d=3, condition=2.0, seed=4, process_variance=1e-3, noise_variance=0.01)
        solo = MixingMatrix(w=np.ones((1, 1)), rho_w=0.0)
        rounds = 200
        states = _advance(obj, solo, cfg, rounds)

        # plain one-point ZO-SGD on the same streams: x <- x - alpha_k phi_k f(x + gamma_k phi_k)
        streams = AgentStreams(cfg.seed, 1)
        x = streams.rng(0, "init").uniform(-cfg.x0_box, cfg.x0_box, size=obj.dim)
        phis = sample_perturbations(cfg.perturbation, streams.rng(0, "perturbation"), BLOCK_ROUNDS)
        processes = obj.sample_process(streams.rng(0, "process"), 0, size=BLOCK_ROUNDS)
        noises = obj.noise.sample(streams.rng(0, "noise"), BLOCK_ROUNDS)
        for k, state in enumerate(states):
            gamma_k = float(cfg.schedule.gamma(k))
            f_value = obj.evaluate(0, x + gamma_k * phis[k], processes[k]) + noises[k]
            g = phis[k] * f_value
            np.testing.assert_allclose(state.x[0], x, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(state.g_prev[0], g, rtol=1e-9, atol=1e-12)
            x = x - float(cfg.schedule.alpha(k)) * g

    def test_zero_step_keeps_the_mean(self, objective, mixing, cfg):
        frozen = dataclasses.replace(
            cfg, schedule=FrozenStep(alpha0=0.1, upsilon1=0.75, gamma0=0.5, upsilon2=0.25)
        )
        states = _advance(objective, mixing, frozen, 15)
        x_bar0 = states[0].x.mean(axis=0)
        for state in states:
            np.testing.assert_allclose(state.x.mean(axis=0), x_bar0, atol=1e-12)

    def test_zero_step_reaches_consensus_at_rate_rho(self, objective, cfg):
        path = metropolis_weights(Topology(n=4, edges=frozenset({(0, 1), (1, 2), (2, 3)})))
        frozen = dataclasses.replace(
            cfg, schedule=FrozenStep(alpha0=0.1, upsilon1=0.75, gamma0=0.5, upsilon2=0.25)
        )
        states = _advance(objective, path, frozen, 40)
        errors = np.sqrt([consensus_error(s.x) for s in states])
        for before, after in zip(errors, errors[1:]):
            assert after <= path.rho_w * before * (1.0 + 1e-12)
        # the bound is tight along the slowest mode
        assert errors[-1] / errors[-2] == pytest.approx(path.rho_w, rel=1e-3)

    def test_dimension_mismatch(self, objective, cfg):
        three = metropolis_weights(erdos_renyi(3, 1.0, seed=0))
        with pytest.raises(ValueError, match="dimension mismatch"):
            init(objective, three, cfg)

    def test_perturbation_dimension_mismatch(self, objective, mixing, cfg):
        wrong = dataclasses.replace(cfg, perturbation=PerturbationSpec(dim=2))
        with pytest.raises(ValueError, match="perturbation dim"):
            init(objective, mixing, wrong)

    def test_step_requires_streams(self, objective, mixing, cfg):
        state = dataclasses.replace(init(objective, mixing, cfg), randomness=None)
        with pytest.raises(ValueError, match="init"):
            step(state, objective, mixing, cfg)


class TestRun:
    """Test complete runs."""

    def test_runs_are_reproducible(self, objective, mixing, cfg):
        first = run(objective, mixing, cfg, stride=5)
        second = run(objective, mixing, cfg, stride=5)
        assert first.as_rows() == second.as_rows()

    def test_seed_changes_the_run(self, objective, mixing, cfg):
        first = run(objective, mixing, cfg, stride=5)
        other = run(objective, mixing, dataclasses.replace(cfg, seed=8), stride=5)
        assert first.as_rows() != other.as_rows()

    def test_stride_logs_the_last_round(self, objective, mixing, cfg):
        trace = run(objective, mixing, dataclasses.replace(cfg, max_iters=10), stride=4)
        assert list(trace.ks) == [0, 4, 8, 10]

    def test_callbacks_see_every_round(self, objective, mixing, cfg):
        counter = RoundCounter()
        run(objective, mixing, dataclasses.replace(cfg, max_iters=7), callbacks=[counter], stride=3)
        assert counter.rounds == list(range(8))
        assert counter.records == [0, 3, 6, 7]

    def test_regret_is_nondecreasing(self, objective, mixing, cfg):
        trace = run(objective, mixing, cfg)
        assert np.all(np.diff(trace.column("cum_regret")) >= 0)
        assert trace.columns == ("k", "loss", "divergence", "consensus", "cum_regret")

    def test_invalid_stride(self, objective, mixing, cfg):
        with pytest.raises(ValueError, match="stride"):
            run(objective, mixing, cfg, stride=0)

    def test_divergence_keeps_partial_trace(self, objective, mixing, cfg):
        wild = dataclasses.replace(
            cfg,
            schedule=Schedule(alpha0=1e6, upsilon1=0.75, gamma0=0.5, upsilon2=0.25),
            divergence_threshold=1e6,
        )
        with pytest.raises(DivergenceError) as excinfo:
            run(objective, mixing, wild)
        assert 1 <= excinfo.value.round <= wild.max_iters
        assert excinfo.value.trace is not None
        assert len(excinfo.value.trace) == excinfo.value.round

    def test_exact_gradient_baseline_converges(self, objective, mixing, schedule):
        cfg = AlgoConfig(
            algorithm="dsgt_noisygrad",
            schedule=dataclasses.replace(schedule, alpha0=0.3),
            grad_noise_std=0.0,
            max_iters=2000,
        )
        trace = run(objective, mixing, cfg, stride=100)
        d = trace.column("divergence")
        assert d[-1] < 1e-3 * d[0]


class TestBoundsProbe:
    """Test the pilot-run maxima."""

    def test_probe_observes_every_round(self, objective, mixing, cfg):
        probe = BoundsProbe()
        run(objective, mixing, cfg, callbacks=[probe], stride=10)
        assert probe.rounds == cfg.max_iters + 1
        state = init(objective, mixing, cfg)
        assert probe.initial_consensus == pytest.approx(consensus_error(state.x))
        assert probe.max_mean_grad_sq > 0
        assert probe.max_tracking_dev >= 0
