"""Reduced SIR-SI host-vector dynamics with uncertain transmission rates.

The host population is tracked through the susceptible and infective
proportions (S_h, I_h), the vector population through its infective
proportion I_v; the removed host class and susceptible vectors are
recovered algebraically as 1 - S_h - I_h and 1 - I_v.  Transmission
rates are time varying and known only through lower/upper envelopes.
The measured output is the host incidence y = beta_vh * S_h * I_v.
"""

from __future__ import annotations

import bisect
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "EpidemicParams",
    "EnvelopeRates",
    "TransmissionEnvelope",
    "SeasonalEnvelope",
    "PiecewiseConstantEnvelope",
    "HostVectorState",
    "reduced_dynamics",
    "incidence_output",
    "basic_reproduction_ratio",
    "integral_form_residuals",
    "simplex_violation",
]


@dataclass(frozen=True)
class EpidemicParams:
    """Constant demographic/recovery rates, all in day^-1.

    mu_h: host birth/death rate, mu_v: vector death rate, gamma: host
    recovery rate.  Hosts turn over much slower than both the disease
    and the vectors, so mu_h must sit strictly below gamma and mu_v.
    """

    mu_h: float
    mu_v: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("mu_h", "mu_v", "gamma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")
        if not self.mu_h < self.gamma:
            raise ValueError(f"mu_h must be < gamma ({self.mu_h} >= {self.gamma})")
        if not self.mu_h < self.mu_v:
            raise ValueError(f"mu_h must be < mu_v ({self.mu_h} >= {self.mu_v})")


class EnvelopeRates(NamedTuple):
    """Transmission rates at one instant: true value bracketed by bounds."""

    beta_vh_lo: float
    beta_vh: float
    beta_vh_hi: float
    beta_hv_lo: float
    beta_hv: float
    beta_hv_hi: float


class HostVectorState(NamedTuple):
    """Population proportions (S_h, I_h, I_v) on the constrained simplex."""

    S_h: float
    I_h: float
    I_v: float


def simplex_violation(state: HostVectorState) -> float:
    """Largest violation of the forward-invariant set of the model.

    Zero means S_h, I_h, I_v >= 0, S_h + I_h <= 1 and I_v <= 1 hold
    exactly; positive values measure how far outside the state sits.
    """
    s, ih, iv = state
    return max(
        0.0,
        -s,
        -ih,
        -iv,
        (s + ih) - 1.0,
        iv - 1.0,
    )


class TransmissionEnvelope(ABC):
    """Time function returning true transmission rates and their bounds.

    Implementations must be deterministic and side-effect free: the
    integrator re-evaluates them at intermediate stage times.
    """

    @abstractmethod
    def at(self, t: float) -> EnvelopeRates:
        """Rates at time t (days)."""

    def sup_beta_hv(self, horizon: float) -> tuple[float, float]:
        """Suprema of (beta_hv_lo, beta_hv_hi) over [0, horizon].

        Generic fallback: dense-grid scan.  Subclasses with analytic
        structure should override with the exact supremum.
        """
        if not (math.isfinite(horizon) and horizon >= 0.0):
            raise ValueError(f"horizon must be finite and >= 0, got {horizon}")
        grid = np.linspace(0.0, horizon, 4097) if horizon > 0 else np.array([0.0])
        lo = max(self.at(float(t)).beta_hv_lo for t in grid)
        hi = max(self.at(float(t)).beta_hv_hi for t in grid)
        return lo, hi


def _check_envelope_values(rates: EnvelopeRates, t: float) -> None:
    for v in rates:
        if not (math.isfinite(v) and v >= 0.0):
            raise ValueError(f"envelope produced invalid rate {v} at t={t}")
    if not rates.beta_vh_lo <= rates.beta_vh <= rates.beta_vh_hi:
        raise ValueError(f"beta_vh bounds out of order at t={t}: {rates}")
    if not rates.beta_hv_lo <= rates.beta_hv <= rates.beta_hv_hi:
        raise ValueError(f"beta_hv bounds out of order at t={t}: {rates}")


@dataclass(frozen=True)
class SeasonalEnvelope(TransmissionEnvelope):
    """Cosine-modulated rates with a relative uncertainty band.

    beta(t) = beta_0 * (1 + amplitude * cos(2*pi*t/period)), and the
    bounds are (1 -/+ uncertainty) * beta(t).  amplitude < 1 and
    uncertainty < 1 keep every rate positive.
    """

    beta_vh_0: float
    beta_hv_0: float
    amplitude: float = 0.4
    period: float = 365.0
    uncertainty: float = 0.1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta_vh_0) and self.beta_vh_0 >= 0.0):
            raise ValueError(f"beta_vh_0 must be finite and >= 0, got {self.beta_vh_0}")
        if not (math.isfinite(self.beta_hv_0) and self.beta_hv_0 >= 0.0):
            raise ValueError(f"beta_hv_0 must be finite and >= 0, got {self.beta_hv_0}")
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError(f"amplitude must be in [0, 1), got {self.amplitude}")
        if not 0.0 <= self.uncertainty < 1.0:
            raise ValueError(f"uncertainty must be in [0, 1), got {self.uncertainty}")
        if not (math.isfinite(self.period) and self.period > 0.0):
            raise ValueError(f"period must be finite and > 0, got {self.period}")

    def at(self, t: float) -> EnvelopeRates:
        season = 1.0 + self.amplitude * math.cos(2.0 * math.pi * t / self.period)
        bvh = self.beta_vh_0 * season
        bhv = self.beta_hv_0 * season
        lo = 1.0 - self.uncertainty
        hi = 1.0 + self.uncertainty
        return EnvelopeRates(lo * bvh, bvh, hi * bvh, lo * bhv, bhv, hi * bhv)

    def sup_beta_hv(self, horizon: float) -> tuple[float, float]:
        # cos attains its maximum at t = 0, so the sup over any horizon
        # is the peak seasonal value.
        if not (math.isfinite(horizon) and horizon >= 0.0):
            raise ValueError(f"horizon must be finite and >= 0, got {horizon}")
        peak = self.beta_hv_0 * (1.0 + self.amplitude)
        return (1.0 - self.uncertainty) * peak, (1.0 + self.uncertainty) * peak


class PiecewiseConstantEnvelope(TransmissionEnvelope):
    """Table-driven envelope, constant on [t_i, t_{i+1}) segments.

    The last row extends to +infinity.  Useful for replaying recorded
    bound signals and for constant-rate tests.
    """

    def __init__(self, breakpoints: Sequence[float], rates: Sequence[EnvelopeRates]):
        if len(breakpoints) != len(rates) or len(rates) == 0:
            raise ValueError("need equally many breakpoints and rate rows, at least one")
        times = [float(t) for t in breakpoints]
        if times[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        for earlier, later in zip(times, times[1:]):
            if not later > earlier:
                raise ValueError("breakpoints must be strictly increasing")
        rows = [EnvelopeRates(*map(float, r)) for r in rates]
        for t, row in zip(times, rows):
            _check_envelope_values(row, t)
        self._times = times
        self._rows = rows

    @classmethod
    def constant(
        cls,
        beta_vh: float,
        beta_hv: float,
        rel_uncertainty: float = 0.0,
    ) -> "PiecewiseConstantEnvelope":
        """Single-segment envelope with symmetric relative bounds."""
        lo = 1.0 - rel_uncertainty
        hi = 1.0 + rel_uncertainty
        row = EnvelopeRates(
            lo * beta_vh, beta_vh, hi * beta_vh, lo * beta_hv, beta_hv, hi * beta_hv
        )
        return cls([0.0], [row])

    def at(self, t: float) -> EnvelopeRates:
        # rightmost segment whose start does not exceed t
        idx = bisect.bisect_right(self._times, t) - 1
        return self._rows[max(idx, 0)]

    def sup_beta_hv(self, horizon: float) -> tuple[float, float]:
        if not (math.isfinite(horizon) and horizon >= 0.0):
            raise ValueError(f"horizon must be finite and >= 0, got {horizon}")
        lo = hi = 0.0
        for start, row in zip(self._times, self._rows):
            if start > horizon:
                break
            lo = max(lo, row.beta_hv_lo)
            hi = max(hi, row.beta_hv_hi)
        return lo, hi


def _require_finite_state(state: HostVectorState) -> None:
    if not (
        math.isfinite(state.S_h)
        and math.isfinite(state.I_h)
        and math.isfinite(state.I_v)
    ):
        raise ValueError(f"non-finite state {state}")


def _reduced_rhs(
    S_h: float,
    I_h: float,
    I_v: float,
    rates: EnvelopeRates,
    p: EpidemicParams,
) -> tuple[float, float, float]:
    """Right-hand side of the reduced model, true rates only."""
    infection = rates.beta_vh * S_h * I_v
    dS = p.mu_h - infection - p.mu_h * S_h
    dIh = infection - (p.mu_h + p.gamma) * I_h
    dIv = rates.beta_hv * (1.0 - I_v) * I_h - p.mu_v * I_v
    return dS, dIh, dIv


def reduced_dynamics(
    state: HostVectorState,
    t: float,
    p: EpidemicParams,
    env: TransmissionEnvelope,
) -> tuple[float, float, float]:
    """Time derivative (dS_h, dI_h, dI_v) of the reduced model at time t."""
    _require_finite_state(state)
    if not math.isfinite(t):
        raise ValueError(f"non-finite time {t}")
    return _reduced_rhs(state.S_h, state.I_h, state.I_v, env.at(t), p)


def incidence_output(
    state: HostVectorState, t: float, env: TransmissionEnvelope
) -> float:
    """Measured host incidence y = beta_vh(t) * S_h * I_v (day^-1)."""
    _require_finite_state(state)
    if not math.isfinite(t):
        raise ValueError(f"non-finite time {t}")
    return env.at(t).beta_vh * state.S_h * state.I_v


def basic_reproduction_ratio(
    p: EpidemicParams, beta_vh: float, beta_hv: float
) -> float:
    """R0 = beta_vh * beta_hv / ((mu_h + gamma) * mu_v) for constant rates.

    The disease-free equilibrium is globally asymptotically stable iff
    the returned ratio is below 1.
    """
    if beta_vh < 0.0 or beta_hv < 0.0:
        raise ValueError("transmission rates must be >= 0")
    denom = (p.mu_h + p.gamma) * p.mu_v
    if denom == 0.0:
        raise ValueError("zero denominator in reproduction ratio")
    return beta_vh * beta_hv / denom


def _decayed_integral(
    times: np.ndarray, decay: np.ndarray, source: np.ndarray, x0: float
) -> np.ndarray:
    """Solve x(t) = x0*exp(-int decay) + int exp(-int_s^t decay) source ds.

    Composite trapezoid on the sample grid, accumulated incrementally so
    that only per-step exponentials are formed (no overflow on long
    horizons).
    """
    out = np.empty_like(times)
    out[0] = x0
    acc = float(x0)
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        fade = math.exp(-0.5 * h * (decay[i] + decay[i + 1]))
        acc = fade * (acc + 0.5 * h * source[i]) + 0.5 * h * source[i + 1]
        out[i + 1] = acc
    return out


def integral_form_residuals(
    times: Sequence[float],
    states: Sequence[HostVectorState],
    p: EpidemicParams,
    env: TransmissionEnvelope,
) -> tuple[float, float, float]:
    """Max residual of each state against its closed integral representation.

    Independent consistency oracle: each component of a sampled
    trajectory is compared with the variation-of-constants form of its
    own equation, e.g.

        S_h(t) = S_h(0) e^{-int_0^t (mu_h + beta_vh I_v)}
                 + mu_h int_0^t e^{-int_s^t (mu_h + beta_vh I_v)} ds

    evaluated by composite trapezoidal quadrature on the same grid.
    Residuals shrink at quadrature order as the grid is refined.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise ValueError("need at least 2 samples on a 1-d time grid")
    s_h = np.array([st[0] for st in states], dtype=float)
    i_h = np.array([st[1] for st in states], dtype=float)
    i_v = np.array([st[2] for st in states], dtype=float)
    if not (len(s_h) == len(t)):
        raise ValueError("times and states must have equal length")

    rates = [env.at(float(tk)) for tk in t]
    beta_vh = np.array([r.beta_vh for r in rates])
    beta_hv = np.array([r.beta_hv for r in rates])

    mu_h, mu_v, gam = p.mu_h, p.mu_v, p.gamma

    form_s = _decayed_integral(
        t, mu_h + beta_vh * i_v, np.full_like(t, mu_h), s_h[0]
    )
    form_ih = _decayed_integral(
        t, np.full_like(t, mu_h + gam), beta_vh * s_h * i_v, i_h[0]
    )
    form_iv = _decayed_integral(
        t, mu_v + beta_hv * i_h, beta_hv * i_h, i_v[0]
    )

    return (
        float(np.max(np.abs(s_h - form_s))),
        float(np.max(np.abs(i_h - form_ih))),
        float(np.max(np.abs(i_v - form_iv))),
    )
