"""Tests for per-round metrics and traces."""

from types import SimpleNamespace

import numpy as np
import pytest

from onepoint_dsgt.metrics import (
    IterationRecord,
    RunTrace,
    TraceRecorder,
    accuracy,
    average_traces,
    consensus_error,
    divergence,
)
from onepoint_dsgt.objective import AnalyticRecord, Dataset, QuadraticObjective


def _record(k, value, acc=None):
    return IterationRecord(
        k=k, loss=value, divergence=value, consensus=value, cum_regret=value, accuracy=acc
    )


class TestMetrics:
    """Test the metric functions."""

    def test_divergence_of_the_mean(self):
        x = np.array([[1.0, 0.0], [3.0, 2.0]])
        assert divergence(x, np.array([0.0, 0.0])) == pytest.approx(5.0)

    def test_divergence_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            divergence(np.zeros((2, 2)), np.zeros(3))

    def test_consensus_error(self):
        x = np.array([[1.0, 0.0], [3.0, 2.0]])
        assert consensus_error(x) == pytest.approx(4.0)
        assert consensus_error(np.ones((5, 3))) == 0.0

    def test_accuracy_predicts_plus_one_on_ties(self):
        test = Dataset(
            features=np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]),
            labels=np.array([1.0, -1.0, 1.0]),
        )
        assert accuracy(np.array([1.0, 0.0]), test) == pytest.approx(1.0)
        assert accuracy(np.array([-1.0, 0.0]), test) == pytest.approx(1.0 / 3.0)

    def test_accuracy_shape(self):
        test = Dataset(features=np.zeros((2, 2)), labels=np.ones(2))
        with pytest.raises(ValueError, match="shape"):
            accuracy(np.zeros(3), test)


class TestRunTrace:
    """Test trace bookkeeping."""

    def test_rounds_must_increase(self):
        trace = RunTrace()
        trace.append(_record(3, 1.0))
        with pytest.raises(ValueError, match="does not follow"):
            trace.append(_record(3, 1.0))

    def test_accuracy_column_only_when_populated(self):
        trace = RunTrace([_record(0, 1.0), _record(1, 0.5)])
        assert "accuracy" not in trace.columns
        with_acc = RunTrace([_record(0, 1.0, 0.5), _record(1, 0.5, 0.75)])
        assert with_acc.columns[-1] == "accuracy"
        assert with_acc.as_rows()[1]["accuracy"] == 0.75

    def test_unknown_column(self):
        with pytest.raises(ValueError, match="unknown"):
            RunTrace().column("bogus")

    def test_average_aligns_on_rounds(self):
        long = RunTrace([_record(0, 1.0), _record(10, 3.0)])
        short = RunTrace([_record(0, 3.0)])
        averaged = average_traces([long, short, RunTrace()])
        np.testing.assert_array_equal(averaged.ks, [0, 10])
        np.testing.assert_allclose(averaged.column("divergence"), [2.0, 3.0])

    def test_average_of_nothing(self):
        assert len(average_traces([])) == 0


class TestTraceRecorder:
    """Test trace recording from swarm states."""

    @pytest.fixture
    def objective(self):
        q = np.stack([np.eye(2), 2.0 * np.eye(2)])
        c = np.array([[1.0, 0.0], [-1.0, 0.0]])
        return QuadraticObjective(q=q, c=c)

    def test_regret_accumulates_every_round(self, objective):
        recorder = TraceRecorder(objective)
        x_star = objective.analytic.x_star
        far = np.tile(x_star + 1.0, (2, 1))
        gap = objective.loss(x_star + 1.0) - objective.loss(x_star)
        for k in range(3):
            recorder.on_round(SimpleNamespace(k=k, x=far))
        recorder.on_record(SimpleNamespace(k=2, x=far))
        assert recorder.trace.records[0].cum_regret == pytest.approx(3 * gap)
        assert recorder.trace.records[0].consensus == 0.0

    def test_wrong_optimum_is_reported(self, objective):
        record = objective.analytic
        wrong = AnalyticRecord(
            x_star=record.x_star + 0.5,
            lam=record.lam,
            L=record.L,
            alpha1=record.alpha1,
            agent_L=record.agent_L,
        )
        obj = QuadraticObjective(q=objective.q, c=objective.c, analytic=wrong)
        recorder = TraceRecorder(obj)
        at_true_optimum = np.tile(record.x_star, (2, 1))
        with pytest.raises(ValueError, match="not a minimizer"):
            recorder.on_round(SimpleNamespace(k=0, x=at_true_optimum))
