"""Command-line front end: ``distrl run | bounds | validate --config FILE``.

Exit codes: 0 success, 2 config error, 3 simulation error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

from .algos import Algorithm, bound_params, optimal_bits, theoretical_bound
from .config import ExperimentConfig, parse_config
from .errors import DistRLError
from .quantize import QuantizerConfig
from .risk import RiskPoint, RiskReport, budget_frontier, scenario_risk, sweep

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_IO = 0, 2, 3, 4
EXPECTED_SLOPE = {"m": -1.0, "n": -1.0, "E": -1.0}


def _load(path: str, seed: int | None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    if seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=seed)
    return cfg


def _bits_per_machine(cfg: ExperimentConfig, dim: int) -> str:
    if cfg.lossless:
        return f"{64 * dim} (lossless float64)"
    q = cfg.scenario().quantizer()
    return f"{dim * math.log2(q.levels):.6g} ({q.levels} levels, P={q.precision:.6g})"


def plan(cfg: ExperimentConfig) -> dict:
    env = cfg.scenario().build_env()
    if cfg.mode == "sweep":
        points = len(cfg.sweep_values)
        machines = sum(cfg.scenario().with_value(cfg.sweep_axis, v).m for v in cfg.sweep_values)
    elif cfg.mode == "frontier":
        points = len(cfg.budgets) + 1
        machines = points * cfg.m
    else:
        points, machines = 1, cfg.m
    return {
        "mode": cfg.mode,
        "algorithm": cfg.algorithm,
        "points": points,
        "trials_per_point": cfg.trials,
        "total_simulations": points * cfg.trials,
        "total_machine_runs": machines * cfg.trials,
        "dim": env.dim,
        "bits_per_machine": _bits_per_machine(cfg, env.dim),
        "base_seed": cfg.base_seed,
    }


def execute(cfg: ExperimentConfig, threads: int = 1) -> tuple[RiskReport, str]:
    """Run the configured experiment; returns the report and a one-line summary."""
    sc = cfg.scenario()
    if cfg.mode == "sweep":
        report = sweep(sc, cfg.sweep_axis, cfg.sweep_values, cfg.trials, cfg.base_seed, threads)
        expected = EXPECTED_SLOPE.get(cfg.sweep_axis)
        theory = "n/a" if expected is None else f"{expected:g}"
        summary = (f"sweep {cfg.sweep_axis}: slope={report.fitted_slope:.4f} "
                   f"stderr={report.slope_stderr:.4f} theory_slope={theory}")
    elif cfg.mode == "frontier":
        report = budget_frontier(sc, cfg.budgets, cfg.trials, cfg.base_seed, threads)
        summary = f"frontier: knee={report.knee} lossless_mse={report.lossless_mse:.6g}"
    else:
        est, bound = scenario_risk(sc, cfg.trials, cfg.base_seed, threads)
        point = RiskPoint(float(cfg.m), est.mse_mean, est.mse_stderr, est.trials, bound)
        report = RiskReport("m", (point,), math.nan, math.nan)
        summary = f"mse={est.mse_mean:.6g} stderr={est.mse_stderr:.3g} bound={bound:.6g} clamps={est.clamp_count}"
    return report, summary


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    if args.dry_run:
        for key, value in plan(cfg).items():
            print(f"{key}: {value}")
        return EXIT_OK
    report, summary = execute(cfg, args.threads)
    if cfg.csv_path:
        with open(cfg.csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    if cfg.report_path:
        with open(cfg.report_path, "w", encoding="utf-8") as fh:
            json.dump({"config": cfg.to_dict(), "report": report.to_dict()}, fh, indent=2)
            fh.write("\n")
    if not cfg.csv_path and not cfg.report_path:
        sys.stdout.write(report.to_csv())
    print(summary)
    return EXIT_OK


def bounds_table(cfg: ExperimentConfig) -> dict:
    sc = cfg.scenario()
    env = sc.build_env()
    qcfg = sc.quantizer(env)
    params = bound_params(env, sc.algorithm, sc.m, sc.size, qcfg, sc.theta_0)
    risk = theoretical_bound(sc.algorithm, **params)
    lossless = theoretical_bound(sc.algorithm, **dict(params, P=0.0))
    try:
        bits = optimal_bits(sc.algorithm, **params)
    except (ValueError, DistRLError):
        bits = math.nan
    return {"algorithm": sc.algorithm.value, "params": params, "risk_bound": risk,
            "statistical_term": lossless, "optimal_bits": bits}


def cmd_bounds(args) -> int:
    cfg = _load(args.config, args.seed)
    table = bounds_table(cfg)
    print(f"algorithm: {table['algorithm']}")
    for key, value in table["params"].items():
        print(f"  {key} = {value:.6g}")
    print(f"risk_bound: {table['risk_bound']:.6g}")
    print(f"statistical_term: {table['statistical_term']:.6g}")
    formula = {
        Algorithm.LSE.value: "A*C*log2(m*n*lam/R)",
        Algorithm.MC_LSE.value: "C*log2(m*S*E*lam/((H-h)*R))",
        Algorithm.TD.value: "C*log2(C/nu)",
    }[table["algorithm"]]
    print(f"optimal_bits [{formula}]: {table['optimal_bits']:.6g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args.config, args.seed)
    print(cfg.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in (
        ("run", cmd_run, "run the configured experiment and write CSV / JSON reports"),
        ("bounds", cmd_bounds, "print theoretical risk bounds and optimal bit counts"),
        ("validate", cmd_validate, "parse and validate a config, print the resolved form"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override run.base_seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (does not change results)")
        p.add_argument("--dry-run", action="store_true", help="validate and print the plan without running")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except DistRLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
