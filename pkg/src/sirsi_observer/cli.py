"""Command line front end: run configs, presets, convergence studies, checks."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .scenario import (
    ConfigError,
    ScenarioConfig,
    check_trace,
    load_config,
    paper_sec6_preset,
    run_scenario,
    read_trace_csv,
)
from .simulate import IntegrationConfig, IntegrationError, run

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default=".", help="directory for output artifacts")
    parser.add_argument(
        "--step-days", type=float, default=None,
        help="override the integration step (days)",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress the summary line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sirsi-observer",
        description=(
            "Simulate an SIR-SI host-vector epidemic with a pair of interval "
            "observers and certify the estimation error bounds."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a JSON scenario config")
    p_run.add_argument("config", help="path to the config file")
    _add_common(p_run)

    p_preset = sub.add_parser("preset", help="run a built-in scenario")
    p_preset.add_argument("name", choices=["paper-sec6"], help="preset name")
    p_preset.add_argument("--uncertainty", type=float, default=0.1,
                          help="relative envelope half-width (default 0.1)")
    p_preset.add_argument("--horizon-years", type=float, default=5.0,
                          help="simulation horizon in years (default 5)")
    p_preset.add_argument("--output-stride", type=int, default=10,
                          help="record every N-th step (default 10)")
    _add_common(p_preset)

    p_conv = sub.add_parser("converge", help="step-halving self-convergence study")
    p_conv.add_argument("config", help="path to the config file")
    p_conv.add_argument("--levels", type=int, default=3,
                        help="number of halvings below the base step (default 3)")
    _add_common(p_conv)

    p_check = sub.add_parser("check", help="re-verify a recorded trace CSV")
    p_check.add_argument("trace", help="path to the trace CSV")
    p_check.add_argument("--config", default=None,
                         help="config to recompute derived columns against")
    p_check.add_argument("--quiet", action="store_true")

    return parser


def _with_step(cfg: ScenarioConfig, step_days: float | None) -> ScenarioConfig:
    if step_days is None:
        return cfg
    old = cfg.integration
    stride = old.output_stride
    n = old.horizon / step_days
    if round(n) % stride != 0:
        stride = 1
    integration = IntegrationConfig(
        step_h=step_days, horizon=old.horizon, output_stride=stride
    )
    return ScenarioConfig(
        params=cfg.params, envelope=cfg.envelope, hyper=cfg.hyper,
        initial=cfg.initial, integration=integration,
        trace_csv=cfg.trace_csv, report_json=cfg.report_json,
    )


def _cmd_run(cfg: ScenarioConfig, args: argparse.Namespace) -> int:
    cfg = _with_step(cfg, args.step_days)
    if cfg.trace_csv is None:
        cfg = ScenarioConfig(
            params=cfg.params, envelope=cfg.envelope, hyper=cfg.hyper,
            initial=cfg.initial, integration=cfg.integration,
            trace_csv="trace.csv", report_json=cfg.report_json or "report.json",
        )
    try:
        code, report = run_scenario(cfg, out_dir=args.out_dir)
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        status = "PASS" if code == EXIT_OK else "FAIL"
        width = report["summary"]["relative_S_h_width_final_year"]
        width_txt = f"{width:.3f}" if width is not None else "n/a"
        print(
            f"{status}: {report['samples']} samples over "
            f"{report['horizon_days']:.0f} days, "
            f"violations={report['violations']['total']}, "
            f"final V1={report['final']['V1']:.3e} V2={report['final']['V2']:.3e}, "
            f"S_h width (final year)={width_txt}"
        )
    return code


def _cmd_converge(cfg: ScenarioConfig, args: argparse.Namespace) -> int:
    cfg = _with_step(cfg, args.step_days)
    levels = max(args.levels, 2)
    base = cfg.integration
    steps = [base.step_h / 2**k for k in range(levels + 1)]
    endpoints = []
    for step in steps:
        # record only the endpoints; intermediate samples are not needed
        n_steps = max(int(round(base.horizon / step)), 1)
        integration = IntegrationConfig(
            step_h=step, horizon=base.horizon, output_stride=n_steps
        )
        trace = run(cfg.initial, integration, cfg.params, cfg.envelope, cfg.hyper)
        endpoints.append(
            np.array(
                [
                    trace.S_h[-1], trace.I_h[-1], trace.I_v[-1],
                    trace.S_h_lo[-1], trace.I_h_hi[-1], trace.I_v_hi[-1],
                    trace.S_h_hi[-1], trace.I_h_lo[-1], trace.I_v_lo[-1],
                ]
            )
        )
    reference = endpoints[-1]
    errors = [float(np.max(np.abs(e - reference))) for e in endpoints[:-1]]
    ratios = [
        errors[i] / errors[i + 1] if errors[i + 1] > 0 else float("inf")
        for i in range(len(errors) - 1)
    ]
    result = {
        "steps_days": steps[:-1],
        "endpoint_errors": errors,
        "ratios": ratios,
        "fourth_order": all(8.0 <= r <= 32.0 for r in ratios),
    }
    out = Path(args.out_dir) / "convergence.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    if not args.quiet:
        ratio_txt = ", ".join(f"{r:.1f}" for r in ratios)
        print(f"{'PASS' if result['fourth_order'] else 'FAIL'}: error ratios [{ratio_txt}]")
    return EXIT_OK if result["fourth_order"] else EXIT_VIOLATIONS


def _cmd_check(args: argparse.Namespace) -> int:
    try:
        columns = read_trace_csv(args.trace)
    except (OSError, ValueError) as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = None
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            _print_config_errors(exc)
            return EXIT_CONFIG
    report, mismatches = check_trace(columns, cfg)
    if not args.quiet:
        status = "PASS" if report.ok else "FAIL"
        extra = ""
        if mismatches:
            worst = max(mismatches, key=mismatches.get)
            extra = f", worst recompute mismatch {worst}={mismatches[worst]:.2e}"
        print(f"{status}: {len(columns['t_days'])} samples, "
              f"violations={report.total}{extra}")
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def _print_config_errors(exc: ConfigError) -> None:
    print("invalid config:", file=sys.stderr)
    for problem in exc.problems:
        print(f"  - {problem}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "check":
        return _cmd_check(args)

    if args.command == "preset":
        try:
            cfg = paper_sec6_preset(
                uncertainty=args.uncertainty,
                horizon_years=args.horizon_years,
                step_days=args.step_days if args.step_days else 0.01,
                output_stride=args.output_stride,
            )
        except ValueError as exc:
            print(f"invalid preset options: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        cfg = ScenarioConfig(
            params=cfg.params, envelope=cfg.envelope, hyper=cfg.hyper,
            initial=cfg.initial, integration=cfg.integration,
            trace_csv="trace.csv", report_json="report.json",
        )
        args.step_days = None
        return _cmd_run(cfg, args)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _print_config_errors(exc)
        return EXIT_CONFIG

    if args.command == "converge":
        return _cmd_converge(cfg, args)
    return _cmd_run(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
