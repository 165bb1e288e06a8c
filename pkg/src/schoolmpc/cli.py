"""Command-line experiment runner.

Subcommands: simulate, mpc, trials, timing, sweep, audit-bounds. Every run
writes one CSV per metric family plus a manifest.json recording the resolved
configuration, its hash, and the seed. Exit status: 0 on success, 1 when a
protocol invariant or analytic bound failed, 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, default_scenario, load_scenario
from .errors import ConfigError, InvariantViolationError, SchoolError
from .experiments import (
    PARAM_SWEEP_CASES,
    bound_audit_rows,
    grid_compare_rows,
    open_loop_rows,
    run_single_trial,
    run_trials,
    sweep_rows,
    timing_rows,
    trial_seeds,
)
from .reporting import write_csv, write_manifest, write_trajectory


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="scenario YAML file")
    parser.add_argument("--seed", type=int, help="override run.base_seed")
    parser.add_argument("--out-dir", type=Path, default=Path("out"),
                        help="output directory (default: ./out)")
    parser.add_argument("--n", type=int, help="override school size")
    parser.add_argument("--radius", type=float, help="override reference radius")


def _load(args, overrides: dict | None = None) -> ScenarioConfig:
    scenario = load_scenario(args.config) if args.config else default_scenario()
    values: dict = {}
    if args.seed is not None:
        values["run.base_seed"] = args.seed
    if args.n is not None:
        values["model.n"] = args.n
    if args.radius is not None:
        values["reference.radius"] = args.radius
    if getattr(args, "steps", None) is not None:
        values["run.steps"] = args.steps
    if getattr(args, "trials", None) is not None:
        values["run.trials"] = args.trials
    if getattr(args, "predictor", None) is not None:
        values["controller.predictor"] = args.predictor
    if overrides:
        values.update(overrides)
    return scenario.with_values(values) if values else scenario


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


def cmd_simulate(args) -> int:
    scenario = _load(args)
    rows, initial, final = open_loop_rows(scenario)
    out = args.out_dir
    write_csv(out / "steps.csv", list(rows[0].keys()), rows)
    write_trajectory(out / "trajectory.json", [initial, final])
    write_manifest(out / "manifest.json", "simulate", scenario.to_dict(),
                   scenario.run["base_seed"])
    print(f"simulate: {scenario.run['steps']} steps, outputs in {out}")
    return 0


def cmd_mpc(args) -> int:
    scenario = _load(args)
    seq = trial_seeds(scenario.run["base_seed"], 1)[0]
    result = run_single_trial(
        scenario, seq, record_trajectory=args.save_trajectory
    )
    out = args.out_dir
    err_rows = []
    for k, e in enumerate(result.errors):
        row = {"k": k, "error": float(e)}
        if k < len(result.applied):
            row.update(
                applied_x=float(result.applied[k][0]),
                applied_y=float(result.applied[k][1]),
                applied_z=float(result.applied[k][2]),
            )
        else:
            row.update(applied_x="", applied_y="", applied_z="")
        err_rows.append(row)
    write_csv(out / "errors.csv",
              ["k", "error", "applied_x", "applied_y", "applied_z"], err_rows)
    ev_rows = [
        {
            "window": e.index,
            "observed_k": e.observed_k,
            "apply_start": e.apply_start,
            "apply_end": e.apply_end,
            "block_x": float(e.block[0]),
            "block_y": float(e.block[1]),
            "block_z": float(e.block[2]),
            "cost": e.cost,
            "n_evals": e.n_evals,
            "solve_time": e.solve_time,
            "budget_exceeded": int(e.budget_exceeded),
            "centrality_fallback": int(e.centrality_fallback),
            "excluded_count": e.excluded_count,
            "degenerate_holds": e.degenerate_holds,
        }
        for e in result.events
    ]
    write_csv(
        out / "events.csv",
        list(ev_rows[0].keys()) if ev_rows else
        ["window", "observed_k", "apply_start", "apply_end", "block_x",
         "block_y", "block_z", "cost", "n_evals", "solve_time",
         "budget_exceeded", "centrality_fallback", "excluded_count",
         "degenerate_holds"],
        ev_rows,
    )
    if args.save_trajectory and result.trajectory is not None:
        write_trajectory(out / "trajectory.json", result.trajectory)
    write_manifest(out / "manifest.json", "mpc", scenario.to_dict(),
                   scenario.run["base_seed"],
                   extras={"predictor": result.predictor})
    print(
        f"mpc[{result.predictor}]: final error {result.errors[-1]:.3f}, "
        f"{len(result.events)} solves, outputs in {out}"
    )
    return 0


def cmd_trials(args) -> int:
    scenario = _load(args)
    result = run_trials(scenario)
    out = args.out_dir
    steps = result.errors.shape[1]
    fields = ["k", "mean_error"] + [f"trial_{t}" for t in range(result.errors.shape[0])]
    rows = []
    for k in range(steps):
        row = {"k": k, "mean_error": float(result.mean_errors[k])}
        for t in range(result.errors.shape[0]):
            row[f"trial_{t}"] = float(result.errors[t, k])
        rows.append(row)
    write_csv(out / "errors.csv", fields, rows)
    write_csv(
        out / "solves.csv",
        ["predictor", "trials", "windows", "mean_solve_time", "max_solve_time",
         "budget_exceeded", "centrality_fallbacks", "cumulative_error"],
        [
            {
                "predictor": result.predictor,
                "trials": result.errors.shape[0],
                "windows": len(result.solve_times),
                "mean_solve_time": float(np.mean(result.solve_times))
                if result.solve_times else 0.0,
                "max_solve_time": float(np.max(result.solve_times))
                if result.solve_times else 0.0,
                "budget_exceeded": result.budget_exceeded,
                "centrality_fallbacks": result.centrality_fallbacks,
                "cumulative_error": result.cumulative_error,
            }
        ],
    )
    write_manifest(out / "manifest.json", "trials", scenario.to_dict(),
                   scenario.run["base_seed"],
                   extras={"predictor": result.predictor,
                           "cumulative_error": result.cumulative_error,
                           "paired_by_seed": True})
    print(
        f"trials[{result.predictor}]: {result.errors.shape[0]} trials, "
        f"cumulative error {result.cumulative_error:.3f}, outputs in {out}"
    )
    return 0


def cmd_timing(args) -> int:
    scenario = _load(args)
    predictors = args.predictors.split(",")
    rows = timing_rows(scenario, args.sizes, predictors)
    out = args.out_dir
    write_csv(out / "timings.csv", list(rows[0].keys()), rows)
    write_manifest(out / "manifest.json", "timing", scenario.to_dict(),
                   scenario.run["base_seed"],
                   extras={"sizes": args.sizes, "predictors": predictors})
    for row in rows:
        print(
            f"timing: n={row['n']} {row['predictor']}: "
            f"mean {row['mean_solve_time']:.3f}s over {row['windows']} windows "
            f"(budget {row['budget']:.1f}s)"
        )
    return 0


def cmd_sweep(args) -> int:
    scenario = _load(args)
    cases = args.cases.split(",") if args.cases else list(PARAM_SWEEP_CASES)
    if cases == ["base"]:
        rows = grid_compare_rows(scenario, args.sizes, args.radii)
    else:
        rows = sweep_rows(scenario, cases, args.sizes, args.radii)
    out = args.out_dir
    write_csv(out / "comparisons.csv", list(rows[0].keys()), rows)
    wins = sum(r["dynamic_wins"] for r in rows)
    write_manifest(out / "manifest.json", "sweep", scenario.to_dict(),
                   scenario.run["base_seed"],
                   extras={"cases": cases, "sizes": args.sizes,
                           "radii": args.radii, "dynamic_wins": wins,
                           "cells": len(rows)})
    print(f"sweep: dynamic at or below static in {wins}/{len(rows)} cells, outputs in {out}")
    return 0


def cmd_audit_bounds(args) -> int:
    seed = args.seed if args.seed is not None else 2024
    rows, summary = bound_audit_rows(args.states, seed, tol=args.tol)
    out = args.out_dir
    write_csv(out / "bounds.csv", list(rows[0].keys()), rows)
    write_manifest(out / "manifest.json", "audit-bounds",
                   {"states": args.states, "tolerance": args.tol}, seed,
                   extras={"summary": summary})
    print(
        f"audit-bounds: {summary['violations']} violations in "
        f"{summary['states']} states ({summary['centrality_rows']} with "
        f"centrality weights), outputs in {out}"
    )
    if summary["violations"]:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schoolmpc",
        description="fish-school simulation, reduced-order prediction, and "
                    "receding-horizon stimulus control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="open-loop rollout, per-step summary CSV")
    _add_common(p)
    p.add_argument("--steps", type=int, help="override run.steps")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mpc", help="one closed-loop tracking run")
    _add_common(p)
    p.add_argument("--steps", type=int, help="override run.steps")
    p.add_argument("--predictor", choices=["orig", "static", "dynamic"])
    p.add_argument("--save-trajectory", action="store_true")
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("trials", help="repeated seeded closed-loop runs")
    _add_common(p)
    p.add_argument("--steps", type=int, help="override run.steps")
    p.add_argument("--trials", type=int, help="override run.trials")
    p.add_argument("--predictor", choices=["orig", "static", "dynamic"])
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("timing", help="per-window solve times across school sizes")
    _add_common(p)
    p.add_argument("--steps", type=int, help="override run.steps")
    p.add_argument("--sizes", type=_int_list, default=[50, 300],
                   help="comma-separated school sizes")
    p.add_argument("--predictors", default="orig,static,dynamic",
                   help="comma-separated predictor names")
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("sweep", help="paired predictor comparison over a grid")
    _add_common(p)
    p.add_argument("--steps", type=int, help="override run.steps")
    p.add_argument("--trials", type=int, help="override run.trials")
    p.add_argument("--cases", help="comma-separated case labels "
                                   f"({','.join(PARAM_SWEEP_CASES)}), or 'base'")
    p.add_argument("--sizes", type=_int_list, default=[50, 100, 200])
    p.add_argument("--radii", type=_float_list, default=[1000.0, 2000.0, 3000.0])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit-bounds", help="verify analytic error bounds on sampled states")
    p.add_argument("--states", type=int, default=10_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_audit_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolationError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    except SchoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
