"""Error-system construction and Lyapunov certification of observer runs.

Each observer's estimation error obeys a linear time-varying system
X' = A(t) X + b(t) whose matrix is Metzler and whose drift b vanishes
without envelope uncertainty.  A common linear Lyapunov function
V = e_S + rho*e_h + omega*e_v then admits the certified envelope

    V(t) <= exp(-int_0^t delta) V(0)
            + int_0^t exp(-int_s^t delta) F(s) ds

with an instantaneous decay rate delta and a forcing term F driven
purely by the envelope width.  Everything here evaluates or verifies
those quantities on recorded traces; nothing feeds back into the
dynamics.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .model import EpidemicParams, HostVectorState, TransmissionEnvelope
from .observer import GainHyperParams, GainValues, ObserverPairState, XiTargets

__all__ = [
    "ErrorVector",
    "ErrorSystem",
    "obs1_errors",
    "obs2_errors",
    "build_error_systems",
    "lyapunov_values",
    "rho_weights",
    "delta_rates",
    "forcing_terms",
    "certified_bound",
    "verify_dual_inequality",
    "metzler_margin",
    "bound_tolerance",
    "TAU_ORD",
    "TAU_DUAL",
]

# Ordering slack for numerically integrated error signs.
TAU_ORD = 1e-7
# Slack for the dual feasibility components u^T (A + delta I).
TAU_DUAL = 1e-9


class ErrorVector(NamedTuple):
    """Signed estimation errors (e_S, e_h, e_v); nonnegative on valid runs."""

    e_S: float
    e_h: float
    e_v: float


class ErrorSystem(NamedTuple):
    """One observer's error dynamics X' = A X + b at a given instant."""

    A: np.ndarray
    b: np.ndarray


def obs1_errors(true_state: HostVectorState, obs: ObserverPairState) -> ErrorVector:
    """(S_h - S_h_lo, I_h_hi - I_h, I_v_hi - I_v)."""
    return ErrorVector(
        true_state.S_h - obs.S_h_lo,
        obs.I_h_hi - true_state.I_h,
        obs.I_v_hi - true_state.I_v,
    )


def obs2_errors(true_state: HostVectorState, obs: ObserverPairState) -> ErrorVector:
    """(S_h_hi - S_h, I_h - I_h_lo, I_v - I_v_lo)."""
    return ErrorVector(
        obs.S_h_hi - true_state.S_h,
        true_state.I_h - obs.I_h_lo,
        true_state.I_v - obs.I_v_lo,
    )


def build_error_systems(
    true_state: HostVectorState,
    obs: ObserverPairState,
    gains: GainValues,
    t: float,
    p: EpidemicParams,
    env: TransmissionEnvelope,
) -> tuple[ErrorSystem, ErrorSystem]:
    """(A, b) pairs of both error systems at time t.

    Off-diagonal entries are products of nonnegative quantities, so A
    stays Metzler on any valid run; b collects the uncertainty spread
    (beta_hi - beta)/(beta - beta_lo) terms and is identically zero
    when the envelope is tight.
    """
    r = env.at(t)
    s_h, i_h, i_v = true_state

    a1 = np.array(
        [
            [-p.mu_h - gains.k_S_lo * r.beta_vh_hi * obs.I_v_hi, 0.0,
             gains.k_S_lo * r.beta_vh_hi * s_h],
            [0.0, -(p.mu_h + p.gamma), 0.0],
            [gains.k_v_hi * r.beta_vh_lo * obs.I_v_hi,
             r.beta_hv_hi * (1.0 - i_v),
             -gains.k_v_hi * r.beta_vh_lo * s_h - r.beta_hv_hi * obs.I_h_hi - p.mu_v],
        ]
    )
    b1 = np.array(
        [
            gains.k_S_lo * (r.beta_vh_hi - r.beta_vh) * s_h * i_v,
            0.0,
            gains.k_v_hi * (r.beta_vh - r.beta_vh_lo) * s_h * i_v
            + (r.beta_hv_hi - r.beta_hv) * i_h * (1.0 - i_v),
        ]
    )

    a2 = np.array(
        [
            [-p.mu_h - gains.k_S_hi * r.beta_vh_lo * obs.I_v_lo, 0.0,
             gains.k_S_hi * r.beta_vh_lo * s_h],
            [0.0, -(p.mu_h + p.gamma), 0.0],
            [gains.k_v_lo * r.beta_vh_hi * obs.I_v_lo,
             r.beta_hv_lo * (1.0 - i_v),
             -gains.k_v_lo * r.beta_vh_hi * s_h - r.beta_hv_lo * obs.I_h_lo - p.mu_v],
        ]
    )
    b2 = np.array(
        [
            gains.k_S_hi * (r.beta_vh - r.beta_vh_lo) * s_h * i_v,
            0.0,
            gains.k_v_lo * (r.beta_vh_hi - r.beta_vh) * s_h * i_v
            + (r.beta_hv - r.beta_hv_lo) * i_h * (1.0 - i_v),
        ]
    )
    return ErrorSystem(a1, b1), ErrorSystem(a2, b2)


def metzler_margin(A: np.ndarray) -> float:
    """Smallest off-diagonal entry (nonnegative iff A is Metzler)."""
    off = A[~np.eye(A.shape[0], dtype=bool)]
    return float(off.min())


def lyapunov_values(
    err1: ErrorVector,
    err2: ErrorVector,
    hp: GainHyperParams,
    rho1: float,
    rho2: float,
) -> tuple[float, float]:
    """Weighted error norms V = e_S + rho*e_h + omega*e_v for both observers."""
    v1 = err1.e_S + rho1 * err1.e_h + hp.omega1 * err1.e_v
    v2 = err2.e_S + rho2 * err2.e_h + hp.omega2 * err2.e_v
    return v1, v2


def rho_weights(
    hp: GainHyperParams,
    env: TransmissionEnvelope,
    horizon: float,
    i_v_lo_floor: float = 0.0,
) -> tuple[float, float]:
    """Lyapunov weights on e_h: rho = omega * sup beta_hv * (1 - floor) / eps.

    The exact weight involves the running lower vector estimate, which
    is unknown a priori; taking its floor (zero by default) gives a
    conservative weight.  rho only scales reported V values and bounds,
    it never enters the dynamics.
    """
    sup_lo, sup_hi = env.sup_beta_hv(horizon)
    if not (math.isfinite(sup_lo) and math.isfinite(sup_hi)):
        raise ValueError("envelope is unbounded on the requested horizon")
    rho1 = hp.omega1 * sup_hi * (1.0 - i_v_lo_floor) / hp.eps_obs1
    rho2 = hp.omega2 * sup_lo * (1.0 - i_v_lo_floor) / hp.eps_obs2
    return rho1, rho2


def delta_rates(targets: XiTargets, p: EpidemicParams) -> tuple[float, float]:
    """Instantaneous Lyapunov decay rates delta = mu_h + xi * I_v_estimate.

    Uses the branch-wise products carried by XiTargets.  The result must
    lie in [mu_h, mu_h + gamma); anything else indicates a
    misconfigured target and raises.
    """
    d1 = p.mu_h + targets.xi1_times_Iv
    d2 = p.mu_h + targets.xi2_times_Iv
    upper = p.mu_h + p.gamma
    for name, d in (("delta1", d1), ("delta2", d2)):
        if not (p.mu_h - 1e-12 <= d < upper):
            raise RuntimeError(
                f"internal inconsistency: {name}={d} outside [mu_h, mu_h+gamma)"
            )
    return d1, d2


def forcing_terms(
    true_state: HostVectorState,
    gains: GainValues,
    t: float,
    env: TransmissionEnvelope,
    hp: GainHyperParams,
) -> tuple[float, float]:
    """Uncertainty forcing F of the Lyapunov envelopes; zero for tight bounds."""
    r = env.at(t)
    s_h, i_h, i_v = true_state
    spread_vh = (r.beta_vh_hi - r.beta_vh_lo) * s_h * i_v
    spread_hv = (r.beta_hv_hi - r.beta_hv_lo) * i_h * (1.0 - i_v)
    f1 = hp.omega1 * (gains.k_v_hi * spread_vh + spread_hv) + gains.k_S_lo * spread_vh
    f2 = hp.omega2 * (gains.k_v_lo * spread_vh + spread_hv) + gains.k_S_hi * spread_vh
    return f1, f2


def certified_bound(
    times: Sequence[float],
    delta: Sequence[float],
    forcing: Sequence[float],
    v0: float,
) -> np.ndarray:
    """Right-hand side of the Lyapunov envelope on the sample grid.

    bound(t) = exp(-int_0^t delta) v0 + int_0^t exp(-int_s^t delta) F ds,
    composite trapezoid throughout, accumulated one step at a time so
    only per-step exponentials are formed (no under/overflow on long
    horizons).  Pointwise increases of F never decrease the result.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("need a nonempty 1-d time grid")
    d = np.asarray(delta, dtype=float)
    f = np.asarray(forcing, dtype=float)
    if d.shape != t.shape or f.shape != t.shape:
        raise ValueError("delta and forcing must match the time grid")
    out = np.empty_like(t)
    out[0] = v0
    acc = float(v0)
    for i in range(t.size - 1):
        h = t[i + 1] - t[i]
        fade = math.exp(-0.5 * h * (d[i] + d[i + 1]))
        acc = fade * (acc + 0.5 * h * f[i]) + 0.5 * h * f[i + 1]
        out[i + 1] = acc
    return out


def bound_tolerance(step: float, horizon: float) -> float:
    """Verification slack for the certified bound (trapezoid is O(h^2))."""
    return max(1e-8, 10.0 * step * step * horizon)


def verify_dual_inequality(
    A: np.ndarray,
    delta: float,
    omega: float,
    rho: float,
) -> np.ndarray:
    """Components of u^T (A + delta*I) with u = (1, rho, omega).

    All three must be <= TAU_DUAL for the Lyapunov envelope to hold at
    this instant; the first is zero by construction of the gains.
    """
    u = np.array([1.0, rho, omega])
    return u @ (A + delta * np.eye(3))
