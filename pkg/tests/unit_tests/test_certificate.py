"""Tests for the empirical rate certificate."""

import dataclasses

import numpy as np
import pytest

from onepoint_dsgt.analysis import thresholds
from onepoint_dsgt.certificate import (
    INAPPLICABLE,
    REPORT_NOTE,
    TheoryConstants,
    rate_certificate,
    sigma_parameters,
    theory_constants,
)
from onepoint_dsgt.engine import AlgoConfig, BoundsProbe, run
from onepoint_dsgt.metrics import IterationRecord, RunTrace
from onepoint_dsgt.objective import make_quadratic
from onepoint_dsgt.topology import erdos_renyi, metropolis_weights
from onepoint_dsgt.zo_estimator import PerturbationSpec, Schedule

RHO = 0.5


@pytest.fixture
def schedule():
    return Schedule(alpha0=16.0, upsilon1=0.75, gamma0=0.15, upsilon2=0.25)


def _constants(schedule, a_const, horizon=2000, **overrides):
    k0, k1, k2 = thresholds(a_const, schedule, RHO)
    values = dict(
        A=a_const,
        B=0.0,
        C=0.0,
        K0=k0,
        K1=k1,
        K2=k2,
        R=0.0,
        M_bar=0.0,
        G=0.0,
        G_bar=0.0,
        rho_w=RHO,
        lam=1.0,
        L=2.0,
        horizon=horizon,
        sigma=sigma_parameters(schedule, RHO, k0, horizon),
    )
    values.update(overrides)
    return TheoryConstants(**values)


def _decaying_trace(schedule, k_max):
    """Divergence proportional to gamma_k^2, logged every ten rounds."""
    ks = np.arange(0, k_max + 1, 10)
    d = (schedule.gamma(ks) / schedule.gamma0) ** 2
    return RunTrace(
        [
            IterationRecord(k=int(k), loss=0.0, divergence=float(v), consensus=0.0, cum_regret=0.0)
            for k, v in zip(ks, d)
        ]
    )


class TestSigmaParameters:
    """Test the scanned schedule quantities."""

    @pytest.mark.parametrize("upsilon", [(0.75, 0.25), (0.9, 0.1), (0.6, 0.3)])
    def test_closed_form_bounds(self, upsilon):
        s = Schedule(alpha0=16.0, upsilon1=upsilon[0], gamma0=0.15, upsilon2=upsilon[1])
        k0, _, _ = thresholds(0.225, s, RHO)
        sigma = sigma_parameters(s, RHO, k0, 20000)
        product = s.alpha0 * s.gamma0
        assert sigma.s1 < 2.0 * s.upsilon2 / product
        assert sigma.s5 < (s.upsilon1 - s.upsilon2) / product

    def test_all_nonnegative(self, schedule):
        sigma = sigma_parameters(schedule, RHO, 0, 1000)
        assert all(v >= 0 for v in sigma.as_dict().values())
        assert list(sigma.as_dict()) == [f"sigma{i}" for i in range(1, 9)]

    def test_horizon_before_k0(self, schedule):
        with pytest.raises(ValueError, match="horizon"):
            sigma_parameters(schedule, RHO, 10, 5)


class TestTheoryConstants:
    """Test the constants assembled from the objective and a pilot run."""

    def test_constants_from_a_pilot(self):
        obj = make_quadratic(n=4, d=3, condition=2.0, seed=1, process_variance=1e-4, center_spread=0.2)
        mixing = metropolis_weights(erdos_renyi(4, 0.8, seed=2))
        spec = PerturbationSpec(dim=3, scale=1.5)
        schedule = Schedule(alpha0=0.5, upsilon1=0.75, gamma0=0.5, upsilon2=0.25)
        probe = BoundsProbe()
        cfg = AlgoConfig(
            algorithm="onepoint_dsgt", schedule=schedule, perturbation=spec, max_iters=100
        )
        run(obj, mixing, cfg, callbacks=[probe], stride=10)

        c = theory_constants(obj.analytic, 4, spec, mixing.rho_w, schedule, probe, horizon=100)
        record = obj.analytic
        assert c.A == pytest.approx(record.lam * spec.alpha2)
        assert c.B == pytest.approx(record.alpha1 * spec.alpha3**3)
        assert c.C == pytest.approx(spec.alpha2 * record.agent_L**2 / (record.lam * 4))
        assert c.M_bar == pytest.approx(2.0 * probe.max_mean_grad_sq)
        assert c.G == pytest.approx(2.0 * probe.max_tracking_dev)
        assert c.G_bar == pytest.approx(2.0 * mixing.rho_w**2 * c.G / (1.0 - mixing.rho_w**2))
        assert c.R == pytest.approx(probe.initial_consensus)
        assert c.K2 == max(c.K0, c.K1)

    def test_unobserved_probe(self, schedule):
        obj = make_quadratic(n=2, d=2, condition=2.0, seed=0)
        with pytest.raises(ValueError, match="probe"):
            theory_constants(obj.analytic, 2, PerturbationSpec(2), RHO, schedule, BoundsProbe(), 10)

    def test_rejects_negative_constants(self, schedule):
        with pytest.raises(ValueError, match="nonnegative"):
            _constants(schedule, 1.0, R=-1.0)

    def test_rejects_inconsistent_thresholds(self, schedule):
        with pytest.raises(ValueError, match="K2"):
            _constants(schedule, 1.0, K2=-1)


class TestRateCertificate:
    """Test the envelope check of a trace."""

    def test_certified_trace(self, schedule):
        constants = _constants(schedule, 10.0, M_bar=100.0)
        report = rate_certificate(constants, schedule, _decaying_trace(schedule, 2000))
        assert report.verdict == "certified"
        assert report.note == REPORT_NOTE
        assert report.envelope1_fraction == 1.0
        assert report.envelope2_fraction == 1.0
        assert report.checked_points > 0
        assert report.exponent == pytest.approx(0.5)
        assert report.exponent_condition
        assert report.sigma1_closed_form_ok and report.sigma5_closed_form_ok
        assert report.regret_envelope is not None and report.regret_envelope > 0

    def test_inapplicable_when_gain_is_too_small(self, schedule):
        constants = _constants(schedule, 1e-3)
        report = rate_certificate(constants, schedule, _decaying_trace(schedule, 2000))
        assert report.verdict == INAPPLICABLE
        assert report.varsigma1 is None and report.varsigma2 is None
        assert report.envelope1_fraction is None
        assert not report.exponent_condition

    def test_partial_when_one_envelope_applies(self, schedule):
        constants = _constants(schedule, 10.0, M_bar=100.0)
        sigma = dataclasses.replace(constants.sigma, s5=20.0)
        report = rate_certificate(
            dataclasses.replace(constants, sigma=sigma), schedule, _decaying_trace(schedule, 2000)
        )
        assert report.verdict == "partial"
        assert report.varsigma1 is not None and report.varsigma2 is None

    def test_trace_must_pass_k2(self, schedule):
        constants = _constants(schedule, 10.0, M_bar=100.0)
        short = _decaying_trace(schedule, constants.K2)
        with pytest.raises(ValueError, match="K2"):
            rate_certificate(constants, schedule, short)

    def test_report_serializes(self, schedule):
        report = rate_certificate(
            _constants(schedule, 10.0, M_bar=100.0), schedule, _decaying_trace(schedule, 2000)
        )
        payload = report.to_json()
        assert payload["constants"]["lambda"] == 1.0
        assert set(payload["sigma"]) == {f"sigma{i}" for i in range(1, 9)}
