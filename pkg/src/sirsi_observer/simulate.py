"""Fixed-step integration of the coupled true-plus-observer system.

The 9 coupled states are ordered (S_h, I_h, I_v, S_h_lo, I_h_hi,
I_v_hi, S_h_hi, I_h_lo, I_v_lo).  A classical Runge-Kutta step is used;
the incidence and the scheduled gains are re-evaluated at every stage
from the stage's own states, so the recorded gain signals are genuine
continuous-time schedules sampled on the grid, not step-frozen values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import certify
from .certify import TAU_DUAL, TAU_ORD, bound_tolerance
from .model import (
    EpidemicParams,
    HostVectorState,
    TransmissionEnvelope,
    _reduced_rhs,
    simplex_violation,
)
from .observer import (
    GainHyperParams,
    ObserverPairState,
    _obs1_rhs,
    _obs2_rhs,
    _schedule_rates,
    _xi_targets_rates,
    check_hyp_kS,
    validate_hyper,
)

__all__ = [
    "IntegrationConfig",
    "IntegrationError",
    "CertifiedTrace",
    "ViolationReport",
    "advance_coupled",
    "run",
    "verify_trace",
    "TAU_INV",
]

# Absolute slack for forward-invariance checks of numerical trajectories.
TAU_INV = 1e-9

# Attribute names of the per-sample scalar series, in canonical order.
TRACE_FIELDS = (
    "S_h", "I_h", "I_v",
    "S_h_lo", "S_h_hi", "I_h_lo", "I_h_hi", "I_v_lo", "I_v_hi",
    "y",
    "k_S_lo", "k_S_hi", "k_v_lo", "k_v_hi",
    "xi1", "xi2", "delta1", "delta2", "F1", "F2",
    "V1", "V2", "bound1", "bound2",
)


class IntegrationError(RuntimeError):
    """The solver produced a non-finite value; carries the failure time."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t} days")
        self.t = t


@dataclass(frozen=True)
class IntegrationConfig:
    """Fixed grid: step size and horizon in days, recording stride."""

    step_h: float = 0.01
    horizon: float = 365.0
    output_stride: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.step_h) and 0.0 < self.step_h <= 0.1):
            raise ValueError(
                f"step_h must be in (0, 0.1] days for stability, got {self.step_h}"
            )
        if not (math.isfinite(self.horizon) and self.horizon >= 0.0):
            raise ValueError(f"horizon must be finite and >= 0, got {self.horizon}")
        n = self.horizon / self.step_h
        if abs(n - round(n)) > 1e-6 or round(n) > 2**31:
            raise ValueError(
                f"horizon must be an integer number of steps, got {n} steps"
            )
        if not (isinstance(self.output_stride, int) and self.output_stride >= 1):
            raise ValueError(f"output_stride must be an integer >= 1, got {self.output_stride}")
        if self.n_steps % self.output_stride != 0:
            raise ValueError(
                f"step count {self.n_steps} is not a multiple of "
                f"output_stride {self.output_stride}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step_h))

    @property
    def n_records(self) -> int:
        return self.n_steps // self.output_stride + 1

    @property
    def record_spacing(self) -> float:
        return self.step_h * self.output_stride


@dataclass
class ViolationReport:
    """Invariant violations found on a recorded trace, grouped by kind."""

    counts: dict[str, int] = field(default_factory=dict)
    worst: dict[str, float] = field(default_factory=dict)
    examples: list[dict] = field(default_factory=list)
    max_examples: int = 50

    def add(self, kind: str, t: float, value: float) -> None:
        self.counts[kind] = self.counts.get(kind, 0) + 1
        if kind not in self.worst or value > self.worst[kind]:
            self.worst[kind] = value
        if len(self.examples) < self.max_examples:
            self.examples.append({"t_days": t, "kind": kind, "value": value})

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def ok(self) -> bool:
        return self.total == 0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(self.counts),
            "worst": dict(self.worst),
            "examples": list(self.examples),
        }


@dataclass
class CertifiedTrace:
    """Sampled run: states, estimates, gains and certification signals.

    Scalar series are one value per recorded time; A1/b1 and A2/b2 hold
    the error-system matrices of the two observers at those times.
    rho1/rho2 are the (a priori, conservative) Lyapunov weights used
    for V and the bounds.  step_h is the spacing of the recorded grid,
    which is coarser than the integration step when a stride was used.
    """

    t: np.ndarray
    S_h: np.ndarray
    I_h: np.ndarray
    I_v: np.ndarray
    S_h_lo: np.ndarray
    S_h_hi: np.ndarray
    I_h_lo: np.ndarray
    I_h_hi: np.ndarray
    I_v_lo: np.ndarray
    I_v_hi: np.ndarray
    y: np.ndarray
    k_S_lo: np.ndarray
    k_S_hi: np.ndarray
    k_v_lo: np.ndarray
    k_v_hi: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    bound1: np.ndarray
    bound2: np.ndarray
    A1: np.ndarray
    b1: np.ndarray
    A2: np.ndarray
    b2: np.ndarray
    rho1: float
    rho2: float
    step_h: float
    horizon: float
    violations: ViolationReport = field(default_factory=ViolationReport)

    def __len__(self) -> int:
        return len(self.t)


def _coupled_rhs(
    t: float,
    x: tuple,
    p: EpidemicParams,
    env: TransmissionEnvelope,
    hp: GainHyperParams,
):
    rates = env.at(t)
    y = rates.beta_vh * x[0] * x[2]
    obs = ObserverPairState(x[3], x[4], x[5], x[6], x[7], x[8])
    gains = _schedule_rates(obs, y, rates, p, hp)
    return (
        _reduced_rhs(x[0], x[1], x[2], rates, p)
        + _obs1_rhs(x[3], x[4], x[5], y, rates, p, gains)
        + _obs2_rhs(x[6], x[7], x[8], y, rates, p, gains)
    )


def advance_coupled(
    x: Sequence[float],
    t: float,
    h: float,
    p: EpidemicParams,
    env: TransmissionEnvelope,
    hp: GainHyperParams,
) -> tuple:
    """One classical 4-stage Runge-Kutta step of the 9-state system."""
    x = tuple(x)
    k1 = _coupled_rhs(t, x, p, env, hp)
    x2 = tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k1))
    k2 = _coupled_rhs(t + 0.5 * h, x2, p, env, hp)
    x3 = tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k2))
    k3 = _coupled_rhs(t + 0.5 * h, x3, p, env, hp)
    x4 = tuple(xi + h * ki for xi, ki in zip(x, k3))
    k4 = _coupled_rhs(t + h, x4, p, env, hp)
    out = tuple(
        xi + (h / 6.0) * (a + 2.0 * (b + c) + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
    )
    if not all(math.isfinite(v) for v in out):
        raise IntegrationError("non-finite derivative or state in RK4 step", t)
    return out


def _validate_initial(x0: tuple) -> None:
    if len(x0) != 9:
        raise ValueError(f"initial state must have 9 components, got {len(x0)}")
    if not all(math.isfinite(v) for v in x0):
        raise ValueError(f"non-finite initial state {x0}")
    s, ih, iv, s_lo, ih_hi, iv_hi, s_hi, ih_lo, iv_lo = x0
    ordered = (
        0.0 <= s_lo <= s <= s_hi
        and 0.0 <= ih_lo <= ih <= ih_hi
        and 0.0 <= iv_lo <= iv <= iv_hi
    )
    if not ordered:
        raise ValueError(
            "initial estimates must bracket the initial state: need "
            "0 <= lo <= true <= hi for S_h, I_h and I_v, got "
            f"S_h=({s_lo}, {s}, {s_hi}), I_h=({ih_lo}, {ih}, {ih_hi}), "
            f"I_v=({iv_lo}, {iv}, {iv_hi})"
        )


def run(
    initial: Sequence[float],
    cfg: IntegrationConfig,
    p: EpidemicParams,
    env: TransmissionEnvelope,
    hp: GainHyperParams,
) -> CertifiedTrace:
    """Integrate, record, certify and verify one scenario.

    The initial 9-state must already bracket the true components.  The
    returned trace carries every recorded signal plus a violation
    report; violations never abort the run.
    """
    validate_hyper(hp, p)
    x = tuple(float(v) for v in initial)
    _validate_initial(x)

    h = cfg.step_h
    n_rec = cfg.n_records
    rho1, rho2 = certify.rho_weights(hp, env, cfg.horizon)

    cols = {name: np.empty(n_rec) for name in TRACE_FIELDS}
    t_rec = np.empty(n_rec)
    a1 = np.empty((n_rec, 3, 3))
    b1 = np.empty((n_rec, 3))
    a2 = np.empty((n_rec, 3, 3))
    b2 = np.empty((n_rec, 3))

    def record(slot: int, t: float, state: tuple) -> None:
        true_state = HostVectorState(state[0], state[1], state[2])
        obs = ObserverPairState(*state[3:9])
        rates = env.at(t)
        y = rates.beta_vh * true_state.S_h * true_state.I_v
        targets = _xi_targets_rates(obs, rates, p, hp)
        gains = _schedule_rates(obs, y, rates, p, hp)
        d1, d2 = certify.delta_rates(targets, p)
        f1, f2 = certify.forcing_terms(true_state, gains, t, env, hp)
        sys1, sys2 = certify.build_error_systems(true_state, obs, gains, t, p, env)
        v1, v2 = certify.lyapunov_values(
            certify.obs1_errors(true_state, obs),
            certify.obs2_errors(true_state, obs),
            hp, rho1, rho2,
        )
        t_rec[slot] = t
        for name, value in zip(
            TRACE_FIELDS,
            (
                *true_state, obs.S_h_lo, obs.S_h_hi, obs.I_h_lo, obs.I_h_hi,
                obs.I_v_lo, obs.I_v_hi, y,
                gains.k_S_lo, gains.k_S_hi, gains.k_v_lo, gains.k_v_hi,
                targets.xi1, targets.xi2, d1, d2, f1, f2, v1, v2, 0.0, 0.0,
            ),
        ):
            cols[name][slot] = value
        a1[slot], b1[slot] = sys1
        a2[slot], b2[slot] = sys2

    record(0, 0.0, x)
    stride = cfg.output_stride
    for n in range(1, cfg.n_steps + 1):
        x = advance_coupled(x, (n - 1) * h, h, p, env, hp)
        if n % stride == 0:
            record(n // stride, n * h, x)

    cols["bound1"] = certify.certified_bound(
        t_rec, cols["delta1"], cols["F1"], cols["V1"][0]
    )
    cols["bound2"] = certify.certified_bound(
        t_rec, cols["delta2"], cols["F2"], cols["V2"][0]
    )

    trace = CertifiedTrace(
        t=t_rec, **cols, A1=a1, b1=b1, A2=a2, b2=b2,
        rho1=rho1, rho2=rho2, step_h=cfg.record_spacing, horizon=cfg.horizon,
    )
    trace.violations = verify_trace(trace, p, hp)
    return trace


def _check_series(
    report: ViolationReport,
    kind: str,
    t: np.ndarray,
    excess: np.ndarray,
) -> None:
    """Register one violation per sample where excess > 0."""
    bad = np.flatnonzero(excess > 0.0)
    for i in bad:
        report.add(kind, float(t[i]), float(excess[i]))


def verify_trace(
    trace: CertifiedTrace,
    p: EpidemicParams,
    hp: GainHyperParams,
) -> ViolationReport:
    """Check every recorded sample against the model/observer invariants.

    Covered: simplex forward-invariance of the true state, observer
    nonnegativity, the lo <= true <= hi sandwich, Metzler structure and
    drift nonnegativity of the error systems, the dual feasibility
    components, the decay-rate range, the small-S_h gain safeguard, and
    the Lyapunov values against their certified bounds.
    """
    rep = ViolationReport()
    t = trace.t

    simplex = np.array(
        [
            simplex_violation(HostVectorState(s, ih, iv))
            for s, ih, iv in zip(trace.S_h, trace.I_h, trace.I_v)
        ]
    )
    _check_series(rep, "simplex", t, simplex - TAU_INV)

    obs_min = np.minimum.reduce(
        [trace.S_h_lo, trace.S_h_hi, trace.I_h_lo, trace.I_h_hi,
         trace.I_v_lo, trace.I_v_hi]
    )
    _check_series(rep, "observer_negative", t, -obs_min - TAU_INV)

    order_excess = np.maximum.reduce(
        [
            trace.S_h_lo - trace.S_h, trace.S_h - trace.S_h_hi,
            trace.I_h_lo - trace.I_h, trace.I_h - trace.I_h_hi,
            trace.I_v_lo - trace.I_v, trace.I_v - trace.I_v_hi,
        ]
    )
    _check_series(rep, "ordering", t, order_excess - TAU_ORD)

    offdiag = ~np.eye(3, dtype=bool)
    for label, a_mat, b_vec in (("1", trace.A1, trace.b1), ("2", trace.A2, trace.b2)):
        metzler_min = a_mat[:, offdiag].min(axis=1)
        _check_series(rep, f"metzler_obs{label}", t, -metzler_min)
        _check_series(rep, f"drift_negative_obs{label}", t, -b_vec.min(axis=1) - 1e-12)

    for label, a_mat, delta, rho, omega in (
        ("1", trace.A1, trace.delta1, trace.rho1, hp.omega1),
        ("2", trace.A2, trace.delta2, trace.rho2, hp.omega2),
    ):
        u = np.array([1.0, rho, omega])
        comps = np.einsum("j,njk->nk", u, a_mat) + delta[:, None] * u[None, :]
        _check_series(rep, f"dual_obs{label}", t, comps.max(axis=1) - TAU_DUAL)

    for label, delta in (("1", trace.delta1), ("2", trace.delta2)):
        low = (p.mu_h - 1e-12) - delta
        high = delta - (p.mu_h + p.gamma)
        _check_series(rep, f"delta_low_obs{label}", t, low)
        _check_series(rep, f"delta_high_obs{label}", t, high)

    for s_est, k_s in ((trace.S_h_lo, trace.k_S_lo), (trace.S_h_hi, trace.k_S_hi)):
        shortfall = np.where(
            s_est <= hp.eps2,
            hp.eps1 - (p.mu_h + (k_s - 1.0) * trace.y),
            -np.inf,
        )
        _check_series(rep, "gain_safeguard", t, shortfall)

    tau_bnd = bound_tolerance(trace.step_h, trace.horizon)
    _check_series(rep, "bound_obs1", t, trace.V1 - trace.bound1 - tau_bnd)
    _check_series(rep, "bound_obs2", t, trace.V2 - trace.bound2 - tau_bnd)
    _check_series(rep, "lyapunov_negative", t, -trace.V1)
    _check_series(rep, "lyapunov_negative", t, -trace.V2)

    return rep
