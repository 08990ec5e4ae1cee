"""Scenario configuration, reference presets, and trace serialization.

Configs are plain JSON documents whose field names mirror the dataclass
fields; time-valued keys may carry a ``_days`` or ``_years`` suffix and
are canonicalized to days (365 days per year).  Traces are written as
CSV with 17-significant-digit decimals so a read-back reproduces every
float bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .certify import bound_tolerance
from .model import (
    EpidemicParams,
    EnvelopeRates,
    PiecewiseConstantEnvelope,
    SeasonalEnvelope,
    TransmissionEnvelope,
)
from .observer import GainHyperParams, validate_hyper
from .simulate import (
    CertifiedTrace,
    IntegrationConfig,
    TRACE_FIELDS,
    ViolationReport,
    run,
    verify_trace,
)

__all__ = [
    "ScenarioConfig",
    "ConfigError",
    "load_config",
    "parse_config",
    "paper_sec6_preset",
    "run_scenario",
    "write_trace_csv",
    "read_trace_csv",
    "verification_report",
    "check_trace",
]

DAYS_PER_YEAR = 365.0

CSV_COLUMNS = ("t_days",) + TRACE_FIELDS

INITIAL_FIELDS = (
    "S_h", "I_h", "I_v",
    "S_h_lo", "I_h_hi", "I_v_hi",
    "S_h_hi", "I_h_lo", "I_v_lo",
)


class ConfigError(ValueError):
    """Invalid configuration; carries one message per violated rule."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one run."""

    params: EpidemicParams
    envelope: TransmissionEnvelope
    hyper: GainHyperParams
    initial: tuple[float, ...]
    integration: IntegrationConfig
    trace_csv: str | None = None
    report_json: str | None = None


def paper_sec6_preset(
    uncertainty: float = 0.1,
    horizon_years: float = 5.0,
    step_days: float = 0.01,
    output_stride: int = 10,
) -> ScenarioConfig:
    """Dengue-like reference scenario with seasonal transmission.

    Rates mu_h=3.4e-5, mu_v=0.025, gamma=0.14 (day^-1), baseline
    transmission 0.2102 / 0.1 modulated by a 40% one-year cosine with a
    +/-10% uncertainty band by default, and bracketing initial data
    around (S_h, I_h, I_v) = (0.2, 0, 0.005).
    """
    return ScenarioConfig(
        params=EpidemicParams(mu_h=3.4e-5, mu_v=0.025, gamma=0.14),
        envelope=SeasonalEnvelope(
            beta_vh_0=0.2102,
            beta_hv_0=0.1,
            amplitude=0.4,
            period=DAYS_PER_YEAR,
            uncertainty=uncertainty,
        ),
        hyper=GainHyperParams(
            omega1=1e5, omega2=1e5,
            eps_obs1=1e-4, eps_obs2=1e-4,
            eps1=1e-5, eps2=1e-5,
        ),
        initial=(0.2, 0.0, 0.005, 0.1, 0.01, 0.01, 0.8, 0.0, 0.0),
        integration=IntegrationConfig(
            step_h=step_days,
            horizon=horizon_years * DAYS_PER_YEAR,
            output_stride=output_stride,
        ),
    )


def _read_number(
    obj: dict, key: str, problems: list[str], path: str, required: bool = True
) -> float | None:
    if key not in obj:
        if required:
            problems.append(f"{path}.{key}: missing required field")
        return None
    value = obj[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        problems.append(f"{path}.{key}: expected a number, got {value!r}")
        return None
    return float(value)


def _read_time(
    obj: dict, base: str, problems: list[str], path: str,
    required: bool = True, default: float | None = None,
) -> float | None:
    """Accept either <base>_days or <base>_years; canonical unit is days."""
    has_days = f"{base}_days" in obj
    has_years = f"{base}_years" in obj
    if has_days and has_years:
        problems.append(f"{path}.{base}: give either _days or _years, not both")
        return None
    if has_days:
        return _read_number(obj, f"{base}_days", problems, path)
    if has_years:
        years = _read_number(obj, f"{base}_years", problems, path)
        return None if years is None else years * DAYS_PER_YEAR
    if required:
        problems.append(f"{path}.{base}: missing {base}_days or {base}_years")
    return default


def _parse_envelope(obj: Any, problems: list[str]) -> TransmissionEnvelope | None:
    if not isinstance(obj, dict):
        problems.append("envelope: expected an object")
        return None
    kind = obj.get("kind")
    if kind == "seasonal":
        beta_vh_0 = _read_number(obj, "beta_vh_0", problems, "envelope")
        beta_hv_0 = _read_number(obj, "beta_hv_0", problems, "envelope")
        amplitude = _read_number(obj, "amplitude", problems, "envelope", required=False)
        uncertainty = _read_number(obj, "uncertainty", problems, "envelope", required=False)
        period = _read_time(obj, "period", problems, "envelope",
                            required=False, default=DAYS_PER_YEAR)
        if beta_vh_0 is None or beta_hv_0 is None:
            return None
        try:
            return SeasonalEnvelope(
                beta_vh_0=beta_vh_0,
                beta_hv_0=beta_hv_0,
                amplitude=0.4 if amplitude is None else amplitude,
                period=period if period is not None else DAYS_PER_YEAR,
                uncertainty=0.1 if uncertainty is None else uncertainty,
            )
        except ValueError as exc:
            problems.append(f"envelope: {exc}")
            return None
    if kind == "piecewise":
        table = obj.get("table")
        if not isinstance(table, list) or not table:
            problems.append("envelope.table: expected a nonempty list of rows")
            return None
        breakpoints, rows = [], []
        for i, row in enumerate(table):
            if not isinstance(row, dict):
                problems.append(f"envelope.table[{i}]: expected an object")
                return None
            t = _read_time(row, "t", problems, f"envelope.table[{i}]")
            vals = [
                _read_number(row, f, problems, f"envelope.table[{i}]")
                for f in EnvelopeRates._fields
            ]
            if t is None or any(v is None for v in vals):
                return None
            breakpoints.append(t)
            rows.append(EnvelopeRates(*vals))
        try:
            return PiecewiseConstantEnvelope(breakpoints, rows)
        except ValueError as exc:
            problems.append(f"envelope: {exc}")
            return None
    problems.append(f"envelope.kind: expected 'seasonal' or 'piecewise', got {kind!r}")
    return None


def parse_config(doc: Any) -> ScenarioConfig:
    """Validate a parsed JSON document; raises ConfigError listing every problem."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a JSON object"])

    params = None
    p_obj = doc.get("params")
    if not isinstance(p_obj, dict):
        problems.append("params: missing or not an object")
    else:
        mu_h = _read_number(p_obj, "mu_h", problems, "params")
        mu_v = _read_number(p_obj, "mu_v", problems, "params")
        gamma = _read_number(p_obj, "gamma", problems, "params")
        if None not in (mu_h, mu_v, gamma):
            try:
                params = EpidemicParams(mu_h=mu_h, mu_v=mu_v, gamma=gamma)
            except ValueError as exc:
                problems.append(f"params: {exc}")

    envelope = _parse_envelope(doc.get("envelope"), problems)

    hyper = None
    h_obj = doc.get("hyper")
    if not isinstance(h_obj, dict):
        problems.append("hyper: missing or not an object")
    else:
        values = {
            name: _read_number(h_obj, name, problems, "hyper")
            for name in ("omega1", "omega2", "eps_obs1", "eps_obs2", "eps1", "eps2")
        }
        if all(v is not None for v in values.values()):
            try:
                hyper = GainHyperParams(**values)
            except ValueError as exc:
                problems.append(f"hyper: {exc}")

    initial = None
    i_obj = doc.get("initial")
    if not isinstance(i_obj, dict):
        problems.append("initial: missing or not an object")
    else:
        vals = [_read_number(i_obj, name, problems, "initial") for name in INITIAL_FIELDS]
        if all(v is not None for v in vals):
            initial = tuple(vals)
            s, ih, iv, s_lo, ih_hi, iv_hi, s_hi, ih_lo, iv_lo = initial
            if not (0.0 <= s_lo <= s <= s_hi):
                problems.append(
                    "initial: S_h estimates must satisfy 0 <= S_h_lo <= S_h <= S_h_hi"
                )
            if not (0.0 <= ih_lo <= ih <= ih_hi):
                problems.append(
                    "initial: I_h estimates must satisfy 0 <= I_h_lo <= I_h <= I_h_hi"
                )
            if not (0.0 <= iv_lo <= iv <= iv_hi):
                problems.append(
                    "initial: I_v estimates must satisfy 0 <= I_v_lo <= I_v <= I_v_hi"
                )

    integration = None
    g_obj = doc.get("integration")
    if not isinstance(g_obj, dict):
        problems.append("integration: missing or not an object")
    else:
        step = _read_time(g_obj, "step", problems, "integration")
        horizon = _read_time(g_obj, "horizon", problems, "integration")
        stride = g_obj.get("output_stride", 1)
        if not isinstance(stride, int) or isinstance(stride, bool):
            problems.append("integration.output_stride: expected an integer")
        elif None not in (step, horizon):
            try:
                integration = IntegrationConfig(
                    step_h=step, horizon=horizon, output_stride=stride
                )
            except ValueError as exc:
                problems.append(f"integration: {exc}")

    if params is not None and hyper is not None:
        try:
            validate_hyper(hyper, params)
        except ValueError as exc:
            problems.append(f"hyper: {exc}")

    output = doc.get("output", {})
    if not isinstance(output, dict):
        problems.append("output: expected an object")
        output = {}

    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(
        params=params,
        envelope=envelope,
        hyper=hyper,
        initial=initial,
        integration=integration,
        trace_csv=output.get("trace_csv"),
        report_json=output.get("report_json"),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    return parse_config(doc)


def write_trace_csv(trace: CertifiedTrace, path: str | Path) -> None:
    """One row per recorded sample; UTF-8, LF endings, exact decimals."""
    series = [trace.t] + [getattr(trace, name) for name in TRACE_FIELDS]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in zip(*series):
            writer.writerow([format(v, ".17g") for v in row])


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of an emitted trace, keyed by CSV header name."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float)
    if data.size == 0:
        raise ValueError("trace file has no samples")
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}


def _final_year_width(trace: CertifiedTrace) -> float | None:
    """Mean relative S_h interval width over the trailing year."""
    if trace.horizon <= 0:
        return None
    start = max(trace.horizon - DAYS_PER_YEAR, 0.0)
    sel = trace.t >= start
    s_h = trace.S_h[sel]
    if s_h.size == 0 or np.any(s_h <= 0.0):
        return None
    width = (trace.S_h_hi[sel] - trace.S_h_lo[sel]) / s_h
    return float(width.mean())


def verification_report(
    trace: CertifiedTrace, cfg: ScenarioConfig
) -> dict:
    """Machine-readable summary of a run: checks, extremes, final values."""
    offdiag = ~np.eye(3, dtype=bool)
    report = {
        "passed": trace.violations.ok,
        "violations": trace.violations.to_dict(),
        "samples": len(trace),
        "step_days": cfg.integration.step_h,
        "horizon_days": trace.horizon,
        "rho1": trace.rho1,
        "rho2": trace.rho2,
        "bound_tolerance": bound_tolerance(trace.step_h, trace.horizon),
        "final": {
            "t_days": float(trace.t[-1]),
            "V1": float(trace.V1[-1]),
            "V2": float(trace.V2[-1]),
            "bound1": float(trace.bound1[-1]),
            "bound2": float(trace.bound2[-1]),
        },
        "extremes": {
            "min_metzler_offdiag": float(
                min(trace.A1[:, offdiag].min(), trace.A2[:, offdiag].min())
            ),
            "min_drift": float(min(trace.b1.min(), trace.b2.min())),
            "max_drift_norm": float(
                max(np.abs(trace.b1).max(), np.abs(trace.b2).max())
            ),
            "max_V_minus_bound": float(
                max((trace.V1 - trace.bound1).max(), (trace.V2 - trace.bound2).max())
            ),
            "min_delta": float(min(trace.delta1.min(), trace.delta2.min())),
            "max_delta": float(max(trace.delta1.max(), trace.delta2.max())),
            "max_ordering_excess": float(
                np.maximum.reduce(
                    [
                        trace.S_h_lo - trace.S_h, trace.S_h - trace.S_h_hi,
                        trace.I_h_lo - trace.I_h, trace.I_h - trace.I_h_hi,
                        trace.I_v_lo - trace.I_v, trace.I_v - trace.I_v_hi,
                    ]
                ).max()
            ),
        },
        "summary": {
            "relative_S_h_width_final_year": _final_year_width(trace),
            "max_I_h_interval_after_1y": _max_ih_width_after(trace, DAYS_PER_YEAR),
        },
    }
    return report


def _max_ih_width_after(trace: CertifiedTrace, t_from: float) -> float | None:
    sel = trace.t > t_from
    if not np.any(sel):
        return None
    return float((trace.I_h_hi[sel] - trace.I_h_lo[sel]).max())


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> tuple[int, dict]:
    """Run, serialize and verify one scenario.

    Writes the trace CSV and the verification report JSON if the config
    names them (paths are taken relative to out_dir when given).
    Returns (exit_code, report); exit code 0 means every check passed.
    """
    trace = run(cfg.initial, cfg.integration, cfg.params, cfg.envelope, cfg.hyper)
    report = verification_report(trace, cfg)

    base = Path(out_dir) if out_dir is not None else Path(".")
    if cfg.trace_csv:
        target = base / cfg.trace_csv
        target.parent.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace, target)
        report["trace_csv"] = str(target)
    if cfg.report_json:
        target = base / cfg.report_json
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        report["report_json"] = str(target)

    return (0 if report["passed"] else 1), report


def check_trace(
    columns: dict[str, np.ndarray],
    cfg: ScenarioConfig | None = None,
) -> tuple[ViolationReport, dict[str, float]]:
    """Offline re-verification of a recorded trace.

    Structural checks (grid monotonicity, finiteness, ordering,
    nonnegativity, V against bound) need only the CSV columns.  With a
    config the derived signals (y, gains, xi, delta, F, V) are
    recomputed from the recorded states and compared against the
    recorded columns; the worst absolute mismatch per column is
    returned alongside.
    """
    rep = ViolationReport()
    t = columns["t_days"]
    if np.any(~np.isfinite(np.concatenate(list(columns.values())))):
        rep.add("non_finite", float("nan"), float("inf"))
    if np.any(np.diff(t) <= 0):
        rep.add("grid", float(t[0]), 1.0)

    order_excess = np.maximum.reduce(
        [
            columns["S_h_lo"] - columns["S_h"], columns["S_h"] - columns["S_h_hi"],
            columns["I_h_lo"] - columns["I_h"], columns["I_h"] - columns["I_h_hi"],
            columns["I_v_lo"] - columns["I_v"], columns["I_v"] - columns["I_v_hi"],
        ]
    )
    for i in np.flatnonzero(order_excess > 1e-7):
        rep.add("ordering", float(t[i]), float(order_excess[i]))

    obs_min = np.minimum.reduce(
        [columns[k] for k in ("S_h_lo", "S_h_hi", "I_h_lo", "I_h_hi", "I_v_lo", "I_v_hi")]
    )
    for i in np.flatnonzero(-obs_min > 1e-9):
        rep.add("observer_negative", float(t[i]), float(-obs_min[i]))

    step = float(t[1] - t[0]) if len(t) > 1 else 0.01
    tau_bnd = bound_tolerance(step, float(t[-1]))
    for name in ("1", "2"):
        excess = columns[f"V{name}"] - columns[f"bound{name}"] - tau_bnd
        for i in np.flatnonzero(excess > 0):
            rep.add(f"bound_obs{name}", float(t[i]), float(excess[i]))

    mismatches: dict[str, float] = {}
    if cfg is not None:
        mismatches = _recompute_mismatch(columns, cfg, rep)
    return rep, mismatches


def _recompute_mismatch(
    columns: dict[str, np.ndarray], cfg: ScenarioConfig, rep: ViolationReport
) -> dict[str, float]:
    from . import certify
    from .model import HostVectorState
    from .observer import ObserverPairState, _schedule_rates, _xi_targets_rates

    p, env, hp = cfg.params, cfg.envelope, cfg.hyper
    t = columns["t_days"]
    n = len(t)
    rho1, rho2 = certify.rho_weights(hp, env, float(t[-1]))
    derived = {
        name: np.empty(n)
        for name in (
            "y", "k_S_lo", "k_S_hi", "k_v_lo", "k_v_hi",
            "xi1", "xi2", "delta1", "delta2", "F1", "F2", "V1", "V2",
        )
    }
    for i in range(n):
        ti = float(t[i])
        true_state = HostVectorState(
            columns["S_h"][i], columns["I_h"][i], columns["I_v"][i]
        )
        obs = ObserverPairState(
            columns["S_h_lo"][i], columns["I_h_hi"][i], columns["I_v_hi"][i],
            columns["S_h_hi"][i], columns["I_h_lo"][i], columns["I_v_lo"][i],
        )
        rates = env.at(ti)
        y = rates.beta_vh * true_state.S_h * true_state.I_v
        targets = _xi_targets_rates(obs, rates, p, hp)
        gains = _schedule_rates(obs, y, rates, p, hp)
        d1, d2 = certify.delta_rates(targets, p)
        f1, f2 = certify.forcing_terms(true_state, gains, ti, env, hp)
        v1, v2 = certify.lyapunov_values(
            certify.obs1_errors(true_state, obs),
            certify.obs2_errors(true_state, obs),
            hp, rho1, rho2,
        )
        for name, value in (
            ("y", y),
            ("k_S_lo", gains.k_S_lo), ("k_S_hi", gains.k_S_hi),
            ("k_v_lo", gains.k_v_lo), ("k_v_hi", gains.k_v_hi),
            ("xi1", targets.xi1), ("xi2", targets.xi2),
            ("delta1", d1), ("delta2", d2),
            ("F1", f1), ("F2", f2), ("V1", v1), ("V2", v2),
        ):
            derived[name][i] = value

    mismatches = {}
    for name, values in derived.items():
        scale = np.maximum(1.0, np.abs(values))
        err = np.abs(values - columns[name]) / scale
        mismatches[name] = float(err.max())
        worst = int(err.argmax())
        if err[worst] > 1e-9:
            rep.add(f"recompute_{name}", float(t[worst]), float(err[worst]))
    return mismatches
