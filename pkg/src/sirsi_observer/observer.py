"""Coupled pair of interval observers driven by the measured incidence.

OBS1 produces (S_h_lo, I_h_hi, I_v_hi), OBS2 produces
(S_h_hi, I_h_lo, I_v_lo); together they bracket the true state whenever
the initial data do and the scheduled gains stay nonnegative and satisfy
the small-S_h safeguard.  The gain schedule targets the largest
Lyapunov decay rate reachable under the envelope bounds, so estimation
speeds up during epidemic bursts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .model import EnvelopeRates, EpidemicParams, TransmissionEnvelope

__all__ = [
    "ObserverPairState",
    "GainHyperParams",
    "GainValues",
    "XiTargets",
    "DegenerateStateError",
    "InfeasibleGainError",
    "validate_hyper",
    "xi_targets",
    "schedule_gains",
    "check_hyp_kS",
    "obs1_dynamics",
    "obs2_dynamics",
    "gain_constraint_residuals",
]

# Denominators below this are treated as zero (infeasible), never clamped.
_DIV_FLOOR = 1e-300


class DegenerateStateError(ValueError):
    """Both branches of a gain-target formula are undefined."""


class InfeasibleGainError(RuntimeError):
    """No gain value can satisfy the scheduling constraints at this time."""


class ObserverPairState(NamedTuple):
    """The six estimates: OBS1 triple then OBS2 triple."""

    S_h_lo: float
    I_h_hi: float
    I_v_hi: float
    S_h_hi: float
    I_h_lo: float
    I_v_lo: float


class GainValues(NamedTuple):
    """Output-injection gains; all must be >= 0."""

    k_S_lo: float
    k_v_hi: float
    k_S_hi: float
    k_v_lo: float


class XiTargets(NamedTuple):
    """Gain-constraint targets and their overflow-safe products with I_v.

    xi1_times_Iv = xi1 * I_v_hi and xi2_times_Iv = xi2 * I_v_lo, but
    evaluated branch-wise (min of the branch products) so the result
    stays finite when an I_v estimate approaches zero.
    """

    xi1: float
    xi2: float
    xi1_times_Iv: float
    xi2_times_Iv: float


@dataclass(frozen=True)
class GainHyperParams:
    """Fixed scalars of the gain schedule.

    omega1/omega2 weight the I_v error in the Lyapunov functions;
    eps_obs1/eps_obs2 are the margins subtracted from gamma in the
    decay targets (must stay below gamma, checked against the model
    parameters by validate_hyper); eps1 is the floor of the small-S_h
    safeguard and eps2 the S_h threshold that triggers it.
    """

    omega1: float = 1e5
    omega2: float = 1e5
    eps_obs1: float = 1e-4
    eps_obs2: float = 1e-4
    eps1: float = 1e-5
    eps2: float = 1e-5

    def __post_init__(self) -> None:
        for name in ("omega1", "omega2", "eps_obs1", "eps_obs2", "eps1", "eps2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")


def validate_hyper(hp: GainHyperParams, p: EpidemicParams) -> None:
    """Cross-checks between hyperparameters and model rates.

    eps_obs < gamma keeps the first decay-target branch positive;
    eps1 <= mu_h makes the small-S_h safeguard satisfiable at y = 0.
    """
    if not hp.eps_obs1 < p.gamma:
        raise ValueError(f"eps_obs1 must be < gamma ({hp.eps_obs1} >= {p.gamma})")
    if not hp.eps_obs2 < p.gamma:
        raise ValueError(f"eps_obs2 must be < gamma ({hp.eps_obs2} >= {p.gamma})")
    if not hp.eps1 <= p.mu_h:
        raise ValueError(f"eps1 must be <= mu_h ({hp.eps1} > {p.mu_h})")


def _xi_branches(
    i_v: float,
    s_h_hi: float,
    numerator: float,
    gamma_margin: float,
    omega: float,
) -> tuple[float, float]:
    """One decay target: min of two branches, plus its product with I_v.

    Tiny negative I_v estimates (integrator round-off) are treated as
    zero: the first branch is then skipped and the product vanishes.
    """
    i_v = max(i_v, 0.0)
    shifted = s_h_hi / omega + i_v
    if i_v <= 0.0:
        if shifted <= 0.0:
            raise DegenerateStateError(
                "gain target undefined: I_v estimate and S_h_hi/omega both zero"
            )
        return numerator / shifted, 0.0
    xi = min(gamma_margin / i_v, numerator / shifted)
    product = min(gamma_margin, numerator * i_v / shifted)
    return xi, product


def _xi_targets_rates(
    obs: ObserverPairState,
    rates: EnvelopeRates,
    p: EpidemicParams,
    hp: GainHyperParams,
) -> XiTargets:
    num1 = p.mu_v - p.mu_h + rates.beta_hv_hi * max(obs.I_h_hi, 0.0)
    num2 = p.mu_v - p.mu_h + rates.beta_hv_lo * max(obs.I_h_lo, 0.0)
    s_hi = max(obs.S_h_hi, 0.0)
    xi1, prod1 = _xi_branches(
        obs.I_v_hi, s_hi, num1, p.gamma - hp.eps_obs1, hp.omega1
    )
    xi2, prod2 = _xi_branches(
        obs.I_v_lo, s_hi, num2, p.gamma - hp.eps_obs2, hp.omega2
    )
    return XiTargets(xi1, xi2, prod1, prod2)


def xi_targets(
    obs: ObserverPairState,
    t: float,
    p: EpidemicParams,
    env: TransmissionEnvelope,
    hp: GainHyperParams,
) -> XiTargets:
    """Decay-rate targets for the two gain constraints at time t.

    xi1 = min{(gamma - eps_obs1)/I_v_hi,
              (mu_v - mu_h + beta_hv_hi*I_h_hi) / (S_h_hi/omega1 + I_v_hi)}

    and xi2 likewise with the lower estimates and beta_hv_lo.  When an
    I_v estimate is zero only the second branch applies.  Both targets
    share S_h_hi in the denominator.
    """
    return _xi_targets_rates(obs, env.at(t), p, hp)


def _schedule_rates(
    obs: ObserverPairState,
    y: float,
    rates: EnvelopeRates,
    p: EpidemicParams,
    hp: GainHyperParams,
) -> GainValues:
    targets = _xi_targets_rates(obs, rates, p, hp)
    k_S_lo, k_v_hi = _one_side(
        targets.xi1, rates.beta_vh_hi, rates.beta_vh_lo, obs.S_h_lo,
        y, p, hp, hp.omega1, "k_S_lo",
    )
    k_S_hi, k_v_lo = _one_side(
        targets.xi2, rates.beta_vh_lo, rates.beta_vh_hi, obs.S_h_hi,
        y, p, hp, hp.omega2, "k_S_hi",
    )
    return GainValues(k_S_lo, k_v_hi, k_S_hi, k_v_lo)


def schedule_gains(
    obs: ObserverPairState,
    y: float,
    t: float,
    p: EpidemicParams,
    env: TransmissionEnvelope,
    hp: GainHyperParams,
) -> GainValues:
    """Closed-form gain schedule meeting the decay targets pointwise.

    k_S_lo = xi1/beta_vh_hi, raised by a max-guard to
    1 - (mu_h - eps1)/y whenever S_h_lo drops below eps2 (the guard
    keeps the lower susceptible estimate from crossing zero); k_v_hi
    absorbs any guard excess so the first linear constraint holds
    exactly.  k_S_hi mirrors this with xi2/beta_vh_lo, and k_v_lo is
    zero unless its own guard fires.

    Raises InfeasibleGainError when a required envelope bound vanishes.
    """
    return _schedule_rates(obs, y, env.at(t), p, hp)


def _one_side(
    xi: float,
    beta_main: float,
    beta_other: float,
    s_estimate: float,
    y: float,
    p: EpidemicParams,
    hp: GainHyperParams,
    omega: float,
    label: str,
) -> tuple[float, float]:
    """Gains (k_S, k_v) of one observer so k_S*beta_main - omega*k_v*beta_other = xi."""
    if beta_main <= _DIV_FLOOR:
        raise InfeasibleGainError(
            f"{label}: divisor transmission bound is zero at this time"
        )
    k_s = xi / beta_main
    if s_estimate <= hp.eps2 and y > 0.0:
        guard = 1.0 - (p.mu_h - hp.eps1) / y
        k_s = max(k_s, guard)
    # y == 0 keeps the base value; the safeguard then reads mu_h >= eps1,
    # which validate_hyper guarantees.
    excess = k_s * beta_main - xi
    if excess <= 0.0:
        return k_s, 0.0
    denom = omega * beta_other
    if denom <= _DIV_FLOOR:
        raise InfeasibleGainError(
            f"{label}: guard requires a companion gain but its divisor bound is zero"
        )
    return k_s, excess / denom


def check_hyp_kS(
    gains: GainValues,
    obs: ObserverPairState,
    y: float,
    p: EpidemicParams,
    hp: GainHyperParams,
) -> bool:
    """Small-S_h safeguard: mu_h + (k_S - 1)*y >= eps1 when S_h est <= eps2.

    Checked for both observers; vacuously true for an estimate above
    the threshold.
    """
    ok = True
    if obs.S_h_lo <= hp.eps2:
        ok = ok and (p.mu_h + (gains.k_S_lo - 1.0) * y >= hp.eps1)
    if obs.S_h_hi <= hp.eps2:
        ok = ok and (p.mu_h + (gains.k_S_hi - 1.0) * y >= hp.eps1)
    return ok


def _obs1_rhs(
    s_lo: float,
    ih_hi: float,
    iv_hi: float,
    y: float,
    rates: EnvelopeRates,
    p: EpidemicParams,
    gains: GainValues,
) -> tuple[float, float, float]:
    corr_s = y - rates.beta_vh_hi * s_lo * iv_hi
    corr_v = y - rates.beta_vh_lo * s_lo * iv_hi
    dS = p.mu_h * (1.0 - s_lo) - y + gains.k_S_lo * corr_s
    dIh = y - (p.mu_h + p.gamma) * ih_hi
    dIv = (
        rates.beta_hv_hi * (1.0 - iv_hi) * ih_hi
        - p.mu_v * iv_hi
        + gains.k_v_hi * corr_v
    )
    return dS, dIh, dIv


def _obs2_rhs(
    s_hi: float,
    ih_lo: float,
    iv_lo: float,
    y: float,
    rates: EnvelopeRates,
    p: EpidemicParams,
    gains: GainValues,
) -> tuple[float, float, float]:
    corr_s = y - rates.beta_vh_lo * s_hi * iv_lo
    corr_v = y - rates.beta_vh_hi * s_hi * iv_lo
    dS = p.mu_h * (1.0 - s_hi) - y + gains.k_S_hi * corr_s
    dIh = y - (p.mu_h + p.gamma) * ih_lo
    dIv = (
        rates.beta_hv_lo * (1.0 - iv_lo) * ih_lo
        - p.mu_v * iv_lo
        + gains.k_v_lo * corr_v
    )
    return dS, dIh, dIv


def obs1_dynamics(
    obs: ObserverPairState,
    y: float,
    t: float,
    p: EpidemicParams,
    env: TransmissionEnvelope,
    gains: GainValues,
) -> tuple[float, float, float]:
    """Derivatives of (S_h_lo, I_h_hi, I_v_hi).

    The S_h_lo correction uses the upper transmission bound while the
    I_v_hi correction uses the lower one; this cross-use is what makes
    the error system positive.  The I_h estimate is driven by the
    output alone, no gain enters it.
    """
    return _obs1_rhs(obs.S_h_lo, obs.I_h_hi, obs.I_v_hi, y, env.at(t), p, gains)


def obs2_dynamics(
    obs: ObserverPairState,
    y: float,
    t: float,
    p: EpidemicParams,
    env: TransmissionEnvelope,
    gains: GainValues,
) -> tuple[float, float, float]:
    """Derivatives of (S_h_hi, I_h_lo, I_v_lo); mirror of obs1_dynamics."""
    return _obs2_rhs(obs.S_h_hi, obs.I_h_lo, obs.I_v_lo, y, env.at(t), p, gains)


def gain_constraint_residuals(
    gains: GainValues, rates: EnvelopeRates, targets: XiTargets, hp: GainHyperParams
) -> tuple[float, float]:
    """Residuals of the two linear gain constraints (zero by construction)."""
    r1 = gains.k_S_lo * rates.beta_vh_hi - hp.omega1 * gains.k_v_hi * rates.beta_vh_lo
    r2 = gains.k_S_hi * rates.beta_vh_lo - hp.omega2 * gains.k_v_lo * rates.beta_vh_hi
    return r1 - targets.xi1, r2 - targets.xi2
