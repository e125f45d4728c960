"""Acceptance-scale runs; deselected by default, run with ``pytest -m slow``."""

import asyncio
from pathlib import Path

import numpy as np
import pytest

from onepoint_dsgt.analysis import bias_probe
from onepoint_dsgt.datagen import two_clusters
from onepoint_dsgt.graph import graph
from onepoint_dsgt.objective import NoiseSpec, hessian_norm_bound, make_logistic, make_quadratic
from onepoint_dsgt.persistence import read_json
from onepoint_dsgt.zo_estimator import PerturbationSpec

pytestmark = pytest.mark.slow

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"
RUNTIME = {"configurable": {"parallel_runs": True, "max_parallel_runs": 4}}


def _logistic(algorithm, alpha0, gamma0, noise_variance):
    return {
        "objective": {
            "kind": "logistic",
            "synthetic": {"n_samples": 2000, "dim": 10, "separation": 4.0, "seed": 0},
            "test_fraction": 0.2,
            "c_reg": 0.1,
            "sigma_u": 0.01,
            "noise_variance": noise_variance,
        },
        "topology": {"n": 6, "p": 0.5, "seed": 1},
        "algorithm": {
            "algorithm": algorithm,
            "schedule": {"alpha0": alpha0, "upsilon1": 0.75, "gamma0": gamma0, "upsilon2": 0.25},
            "seed": 0,
            "max_iters": 50000,
        },
        "metrics_stride": 500,
        "repetitions": 4,
    }


@pytest.fixture(scope="module")
def quadratic_result():
    """The shipped quadratic acceptance run, certified."""
    payload = read_json(CONFIG_DIR / "quadratic_acceptance.json")
    return asyncio.run(graph.ainvoke({"config": payload, "mode": "certify"}, config=RUNTIME))


class TestQuadraticAcceptance:
    """Rates of the averaged quadratic run."""

    def test_no_divergence(self, quadratic_result):
        assert quadratic_result["errors"] == []
        assert not quadratic_result["diverged"]

    def test_divergence_rate(self, quadratic_result):
        slope = quadratic_result["summary"]["slopes"]["divergence"]
        assert -0.75 <= slope <= -0.40

    def test_regret_growth(self, quadratic_result):
        slope = quadratic_result["summary"]["slopes"]["cum_regret"]
        assert 0.35 <= slope <= 0.65

    def test_consensus_decays(self, quadratic_result):
        trace = quadratic_result["trace"]
        consensus = dict(zip(trace.ks.tolist(), trace.column("consensus")))
        assert consensus[100_000] <= 1e-3 * consensus[100]

    def test_certificate(self, quadratic_result):
        certificate = quadratic_result["certificate"]
        assert certificate["verdict"] in ("certified", "partial")
        assert certificate["exponent_condition"]
        assert certificate["sigma1_closed_form_ok"] and certificate["sigma5_closed_form_ok"]
        assert certificate["bias_probe"]["within_bound"]

    def test_divergence_stays_under_the_gamma_envelope(self, quadratic_result):
        fraction = quadratic_result["certificate"]["envelope1_fraction"]
        assert fraction is not None
        assert fraction >= 0.95


class TestLogisticAcceptance:
    """Classification with one-point estimates against the noisy-gradient baseline."""

    @pytest.mark.asyncio
    async def test_both_algorithms_classify(self):
        onepoint = await graph.ainvoke(
            {"config": _logistic("onepoint_dsgt", 3.0, 1.5, 0.01)}, config=RUNTIME
        )
        baseline = await graph.ainvoke(
            {"config": _logistic("dsgt_noisygrad", 0.5, 1.0, 0.01)}, config=RUNTIME
        )
        for result in (onepoint, baseline):
            assert not result["diverged"]
            assert result["summary"]["final"]["accuracy"] >= 0.90
        assert baseline["summary"]["final"]["loss"] <= onepoint["summary"]["final"]["loss"]


def test_bias_vanishes_for_quadratics():
    obj = make_quadratic(n=2, d=5, condition=3.0, seed=9, process_variance=1e-4)
    spec = PerturbationSpec(dim=5, scale=1.5)
    result = bias_probe(obj, obj.analytic.x_star + 0.3, 0.5, spec, 1_000_000, np.random.default_rng(0))
    assert np.all(np.abs(result.bias) <= 5.0 * result.standard_error)


def test_logistic_bias_within_bound():
    data = two_clusters(2000, 10, 4.0, seed=0).split(10)
    obj = make_logistic(data, c_reg=0.1, sigma_u=0.01, noise=NoiseSpec(1.0))
    rng = np.random.default_rng(1)
    alpha1 = hessian_norm_bound(obj, 64, 2.0, rng)
    spec = PerturbationSpec(dim=10, scale=1.5)
    for point, theta in enumerate(rng.uniform(-1.0, 1.0, size=(10, 10))):
        result = bias_probe(obj, theta, 0.5, spec, 1_000_000, rng, agent=point, alpha1=alpha1)
        assert result.within_bound(3.0)
