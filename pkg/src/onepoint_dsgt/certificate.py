"""Empirical rate certificate for the divergence of a run.

Constants that have no closed form (``M_bar``, ``G``) come from a pilot run
scaled by a safety factor, so a report is a consistency check of the run
against the envelopes, not a proof.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Optional

import numpy as np

from onepoint_dsgt.analysis import (
    beta_sequence,
    estimate_upsilon,
    k1_closed_form,
    regret_envelope,
    thresholds,
)
from onepoint_dsgt.engine import BoundsProbe
from onepoint_dsgt.metrics import RunTrace
from onepoint_dsgt.objective import AnalyticRecord
from onepoint_dsgt.zo_estimator import PerturbationSpec, Schedule

logger = logging.getLogger(__name__)

REPORT_NOTE = (
    "M_bar and G are empirical maxima from a pilot run times a safety factor; "
    "this report checks the run against the envelopes and is not a proof."
)
INAPPLICABLE = "certificate inapplicable"
SAFETY_FACTOR = 2.0


@dataclass(frozen=True)
class SigmaParameters:
    """``sigma_1 .. sigma_8``, each a maximum over ``K0 <= k <= horizon``."""

    s1: float
    s2: float
    s3: float
    s4: float
    s5: float
    s6: float
    s7: float
    s8: float

    def as_dict(self) -> dict[str, float]:
        return {f"sigma{i}": getattr(self, f"s{i}") for i in range(1, 9)}


def sigma_parameters(schedule: Schedule, rho_w: float, k0: int, horizon: int) -> SigmaParameters:
    """Scan the k-indexed quantities behind the certificate from ``K0`` to ``horizon``."""
    if horizon < k0:
        raise ValueError(f"scan horizon {horizon} ends before K0 = {k0}")
    beta, delta = beta_sequence(rho_w, schedule, horizon + 1)
    ks = np.arange(k0, horizon + 1)
    alpha, gamma = schedule.alpha(ks), schedule.gamma(ks)
    alpha_next, gamma_next = schedule.alpha(ks + 1), schedule.gamma(ks + 1)
    ag = alpha * gamma
    ratio, ratio_next = alpha / gamma, alpha_next / gamma_next
    b, dl = beta[ks], delta[ks]
    return SigmaParameters(
        s1=float(np.max((1.0 - (gamma_next / gamma) ** 2) / ag)),
        s2=float(np.max(dl / gamma**2)),
        s3=float(np.max(b / gamma**2)),
        s4=float(np.max(alpha / gamma**3)),
        s5=float(np.max((1.0 - ratio_next / ratio) / ag)),
        s6=float(np.max(np.sqrt(gamma**3 / alpha))),
        s7=float(np.max(dl / ratio)),
        s8=float(np.max(b / ratio)),
    )


@dataclass(frozen=True)
class TheoryConstants:
    """Constants of the rate certificate for one objective, network and schedule."""

    A: float
    B: float
    C: float
    K0: int
    K1: int
    K2: int
    R: float
    M_bar: float
    G: float
    G_bar: float
    rho_w: float
    lam: float
    L: float
    horizon: int
    sigma: SigmaParameters
    alpha1_estimated: bool = False

    def __post_init__(self) -> None:
        values = (self.A, self.B, self.C, self.R, self.M_bar, self.G, self.G_bar)
        if any(v < 0 for v in values):
            raise ValueError("theory constants must be nonnegative")
        if self.K2 < max(self.K0, self.K1):
            raise ValueError(f"K2 = {self.K2} below max(K0, K1) = {max(self.K0, self.K1)}")


def theory_constants(
    analytic: AnalyticRecord,
    n_agents: int,
    spec: PerturbationSpec,
    rho_w: float,
    schedule: Schedule,
    probe: BoundsProbe,
    horizon: int,
    safety: float = SAFETY_FACTOR,
) -> TheoryConstants:
    """``A = lam a2``, ``B = a1 a3^3``, ``C = a2 L^2 / (lam n)`` plus pilot-run bounds.

    ``L`` in ``C`` is the largest per-agent smoothness constant.
    """
    if probe.initial_consensus is None:
        raise ValueError("bounds probe has not observed any round")
    a_const = analytic.lam * spec.alpha2
    k0, k1, k2 = thresholds(a_const, schedule, rho_w)
    g_bound = safety * probe.max_tracking_dev
    return TheoryConstants(
        A=a_const,
        B=analytic.alpha1 * spec.alpha3**3,
        C=spec.alpha2 * analytic.agent_L**2 / (analytic.lam * n_agents),
        K0=k0,
        K1=k1,
        K2=k2,
        R=probe.initial_consensus,
        M_bar=safety * probe.max_mean_grad_sq,
        G=g_bound,
        G_bar=2.0 * rho_w**2 * g_bound / (1.0 - rho_w**2),
        rho_w=rho_w,
        lam=analytic.lam,
        L=analytic.L,
        horizon=horizon,
        sigma=sigma_parameters(schedule, rho_w, k0, max(horizon, k0)),
        alpha1_estimated=analytic.alpha1_estimated,
    )


def _quadratic_root(half_b: float, rest: float) -> float:
    return half_b + float(np.sqrt(half_b**2 + rest))


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of checking a trace against the divergence envelopes."""

    note: str
    verdict: str
    scan_horizon: int
    K0: int
    K1: int
    K2: int
    k1_closed_form: int
    constants: dict[str, Any]
    sigma: dict[str, float]
    varsigma1: Optional[float]
    varsigma2: Optional[float]
    envelope1_fraction: Optional[float]
    envelope2_fraction: Optional[float]
    checked_points: int
    sigma1_closed_form_ok: bool
    sigma5_closed_form_ok: bool
    exponent: float
    exponent_condition: bool
    upsilon_estimate: Optional[float]
    regret_envelope: Optional[float]
    alpha1_estimated: bool

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def rate_certificate(
    constants: TheoryConstants, schedule: Schedule, trace: RunTrace
) -> CertificateReport:
    """Evaluate the envelopes ``D_k <= varsigma1^2 gamma_k^2`` and ``D_k <= varsigma2^2 alpha_k / gamma_k``.

    ``varsigma1`` needs ``sigma1 < A`` and ``varsigma2`` needs ``sigma5 < A``;
    when neither holds the verdict is "certificate inapplicable".

    Raises:
        ValueError: If the trace does not reach past ``K2``.
    """
    c, s = constants, constants.sigma
    ks, d = trace.ks, trace.column("divergence")
    if not len(trace) or ks[-1] <= c.K2:
        last = int(ks[-1]) if len(trace) else -1
        raise ValueError(f"trace ends at k = {last}, needs to reach past K2 = {c.K2}")
    at_k0 = np.flatnonzero(ks >= c.K0)
    k_start = int(ks[at_k0[0]])
    d_start = float(d[at_k0[0]])
    gamma_start = float(schedule.gamma(k_start))
    alpha_start = float(schedule.alpha(k_start))
    if k_start != c.K0:
        logger.info("D_K0 taken at the first logged round k = %d", k_start)

    varsigma1 = varsigma2 = None
    if s.s1 < c.A:
        gap = c.A - s.s1
        root = _quadratic_root(
            c.B / (2.0 * gap),
            (c.C * c.R * s.s2 + c.C * c.G_bar * s.s3 + c.M_bar * s.s4) / gap,
        )
        varsigma1 = max(np.sqrt(d_start) / gamma_start, root)
    if s.s5 < c.A:
        gap = c.A - s.s5
        root = _quadratic_root(
            c.B * s.s6 / (2.0 * gap),
            (c.C * (c.R * s.s7 + c.G_bar * s.s8) + c.M_bar) / gap,
        )
        varsigma2 = max(float(np.sqrt(d_start * gamma_start / alpha_start)), root)

    checked = ks > c.K2
    k_checked, d_checked = ks[checked], d[checked]
    fraction1 = fraction2 = None
    if varsigma1 is not None:
        fraction1 = float(np.mean(d_checked <= varsigma1**2 * schedule.gamma(k_checked) ** 2))
    if varsigma2 is not None:
        envelope = varsigma2**2 * schedule.alpha(k_checked) / schedule.gamma(k_checked)
        fraction2 = float(np.mean(d_checked <= envelope))

    if varsigma1 is None and varsigma2 is None:
        verdict = INAPPLICABLE
    elif varsigma1 is not None and varsigma2 is not None:
        verdict = "certified"
    else:
        verdict = "partial"
    upsilon_hat = estimate_upsilon(trace, schedule, c.K2)
    product = schedule.alpha0 * schedule.gamma0
    report = CertificateReport(
        note=REPORT_NOTE,
        verdict=verdict,
        scan_horizon=c.horizon,
        K0=c.K0,
        K1=c.K1,
        K2=c.K2,
        k1_closed_form=k1_closed_form(c.rho_w),
        constants={
            "A": c.A,
            "B": c.B,
            "C": c.C,
            "R": c.R,
            "M_bar": c.M_bar,
            "G": c.G,
            "G_bar": c.G_bar,
            "rho_w": c.rho_w,
            "lambda": c.lam,
            "L": c.L,
        },
        sigma=s.as_dict(),
        varsigma1=None if varsigma1 is None else float(varsigma1),
        varsigma2=None if varsigma2 is None else float(varsigma2),
        envelope1_fraction=fraction1,
        envelope2_fraction=fraction2,
        checked_points=int(checked.sum()),
        sigma1_closed_form_ok=s.s1 < 2.0 * schedule.upsilon2 / product,
        sigma5_closed_form_ok=s.s5 < (schedule.upsilon1 - schedule.upsilon2) / product,
        exponent=schedule.rate_exponent,
        exponent_condition=schedule.satisfies_rate_condition(c.A),
        upsilon_estimate=upsilon_hat,
        regret_envelope=None
        if upsilon_hat is None
        else regret_envelope(upsilon_hat, c.L, int(ks[-1])),
        alpha1_estimated=c.alpha1_estimated,
    )
    logger.info("certificate verdict: %s (K2 = %d, horizon = %d)", verdict, c.K2, c.horizon)
    return report
