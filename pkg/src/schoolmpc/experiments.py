"""Experiment drivers: initialization, trials, timing, sweeps, bound audits.

Everything here is deterministic given the scenario's base seed: trial seeds
are spawned from a SeedSequence, so trial t of a scenario always sees the same
initial school and noise stream regardless of which other trials run. Paired
predictor comparisons reuse the same trial seeds for both predictors.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .errors import SchoolError
from .model import ModelParams, NoiseModel, SchoolState, mass_center, polarization, step
from .mpc import MpcResult, ReferenceSphere, run_mpc
from .network import build_graph, eigenvector_centrality, is_strongly_connected
from .reduction import (
    diagnostics,
    heading_residual_checks,
    orientation_deviation_checks,
    uniform_weights,
)
from .sampling import sample_analysis_state, uniform_ball, uniform_sphere
from .vec import normalization_residual

# Parameter-variation cases: label -> dotted-key overrides.
PARAM_SWEEP_CASES: dict[str, dict[str, float]] = {
    "a": {"model.sensitivity": 15.0},
    "b": {"model.sensitivity": 5.0},
    "c": {"model.turning_rate": 0.92},
    "d": {"model.turning_rate": 0.23},
    "e": {"model.view_half_angle": 0.875 * np.pi},
    "f": {"model.view_half_angle": 0.625 * np.pi},
    "g": {"model.orientation_radius": 875.0},
    "h": {"model.orientation_radius": 625.0},
    "i": {"model.attraction_radius": 1125.0},
    "j": {"model.attraction_radius": 875.0},
}


def initialize_school(
    n: int,
    ref: ReferenceSphere,
    rng: np.random.Generator,
    init_radius: float,
) -> SchoolState:
    """Random school whose mass center sits on the reference surface.

    Positions are uniform in a ball of init_radius, headings uniform on the
    sphere; the whole school is then rigidly shifted so its mass center lands
    on a uniformly drawn point of the reference sphere.
    """
    positions = uniform_ball(rng, n, init_radius)
    headings = uniform_sphere(rng, n)
    where = ref.center + ref.radius * uniform_sphere(rng, 1)[0]
    positions = positions - positions.mean(axis=0) + where
    return SchoolState(0, positions, headings)


def trial_seeds(base_seed: int, trials: int) -> list[np.random.SeedSequence]:
    return list(np.random.SeedSequence(base_seed).spawn(trials))


def run_single_trial(
    scenario: ScenarioConfig,
    trial_seed: np.random.SeedSequence,
    predictor: str | None = None,
    record_trajectory: bool = False,
) -> MpcResult:
    """One closed-loop run; the trial seed covers init, plant noise, solver."""
    params = scenario.model_params()
    cfg = scenario.controller_config()
    if predictor is not None:
        cfg.predictor = predictor
    ref = scenario.reference_sphere()
    init_ss, loop_ss = trial_seed.spawn(2)
    rng = np.random.Generator(np.random.PCG64(init_ss))
    state = initialize_school(params.n, ref, rng, scenario.init_radius)
    return run_mpc(
        state,
        params,
        cfg,
        ref,
        steps=scenario.run["steps"],
        seed=loop_ss,
        record_trajectory=record_trajectory,
    )


@dataclass
class TrialsResult:
    predictor: str
    errors: np.ndarray          # (trials, steps + 1)
    mean_errors: np.ndarray     # (steps + 1,)
    cumulative_error: float     # integral of the mean error, settled window
    solve_times: list[float]
    budget_exceeded: int
    centrality_fallbacks: int


def asymptotic_cumulative_error(mean_errors: np.ndarray, tau: float) -> float:
    """Trapezoid integral of the trial-mean error over the settled window.

    For runs of at least 1000 steps the window is steps [500, 1000]; shorter
    runs integrate over their second half.
    """
    last = len(mean_errors) - 1
    if last >= 1000:
        lo, hi = 500, 1000
    else:
        lo, hi = last // 2, last
    if hi <= lo:
        raise SchoolError("run too short to integrate the settled error")
    return float(np.trapezoid(mean_errors[lo : hi + 1], dx=tau))


def run_trials(scenario: ScenarioConfig, predictor: str | None = None) -> TrialsResult:
    """Run the scenario's trials and aggregate errors and solve statistics."""
    trials = scenario.run["trials"]
    seeds = trial_seeds(scenario.run["base_seed"], trials)
    errors = []
    solve_times: list[float] = []
    exceeded = 0
    fallbacks = 0
    name = predictor or scenario.controller["predictor"]
    for seq in seeds:
        result = run_single_trial(scenario, seq, predictor=name)
        errors.append(result.errors)
        solve_times.extend(result.solve_times)
        exceeded += sum(1 for e in result.events if e.budget_exceeded)
        fallbacks += sum(1 for e in result.events if e.centrality_fallback)
    arr = np.array(errors)
    mean_errors = arr.mean(axis=0)
    eps = asymptotic_cumulative_error(mean_errors, scenario.model_params().tau)
    return TrialsResult(
        predictor=name,
        errors=arr,
        mean_errors=mean_errors,
        cumulative_error=eps,
        solve_times=solve_times,
        budget_exceeded=exceeded,
        centrality_fallbacks=fallbacks,
    )


def timing_rows(
    scenario: ScenarioConfig,
    sizes: list[int],
    predictors: list[str],
) -> list[dict]:
    """Mean per-window solve time for each school size and predictor.

    Reuses the scenario's controller settings; one closed-loop run per cell,
    averaging over its solve events.
    """
    rows = []
    for n in sizes:
        cell = scenario.with_values({"model.n": int(n)})
        for predictor in predictors:
            seq = trial_seeds(cell.run["base_seed"], 1)[0]
            t0 = time.perf_counter()
            result = run_single_trial(cell, seq, predictor=predictor)
            wall = time.perf_counter() - t0
            times = result.solve_times
            if not times:
                raise SchoolError("timing run produced no solve events")
            budget = cell.controller["period"] * cell.model["tau"]
            rows.append(
                {
                    "n": int(n),
                    "predictor": predictor,
                    "period": cell.controller["period"],
                    "horizon": cell.controller["horizon"],
                    "windows": len(times),
                    "mean_solve_time": float(np.mean(times)),
                    "max_solve_time": float(np.max(times)),
                    "budget": float(budget),
                    "over_budget": int(float(np.mean(times)) > budget),
                    "wall_time": wall,
                }
            )
    return rows


def grid_compare_rows(
    scenario: ScenarioConfig,
    sizes: list[int],
    radii: list[float],
    case: str = "base",
) -> list[dict]:
    """Paired static/dynamic comparison over an (N, reference radius) grid.

    Both predictors see identical trial seeds (same schools, same plant
    noise), so each cell's cumulative errors are directly comparable.
    """
    rows = []
    for n in sizes:
        for radius in radii:
            cell = scenario.with_values(
                {"model.n": int(n), "reference.radius": float(radius)}
            )
            res_static = run_trials(cell, predictor="static")
            res_dynamic = run_trials(cell, predictor="dynamic")
            rows.append(
                {
                    "case": case,
                    "n": int(n),
                    "reference_radius": float(radius),
                    "trials": cell.run["trials"],
                    "cumulative_error_static": res_static.cumulative_error,
                    "cumulative_error_dynamic": res_dynamic.cumulative_error,
                    "ratio_dynamic_over_static": (
                        res_dynamic.cumulative_error / res_static.cumulative_error
                        if res_static.cumulative_error > 0
                        else float("nan")
                    ),
                    "dynamic_wins": int(
                        res_dynamic.cumulative_error <= res_static.cumulative_error
                    ),
                    "centrality_fallbacks": res_dynamic.centrality_fallbacks,
                }
            )
    return rows


def sweep_rows(
    scenario: ScenarioConfig,
    cases: list[str],
    sizes: list[int],
    radii: list[float],
) -> list[dict]:
    """grid_compare_rows for each labeled parameter-variation case."""
    rows = []
    for case in cases:
        if case not in PARAM_SWEEP_CASES:
            raise SchoolError(f"unknown sweep case {case!r}")
        varied = scenario.with_values(PARAM_SWEEP_CASES[case])
        rows.extend(grid_compare_rows(varied, sizes, radii, case=case))
    return rows


def open_loop_rows(
    scenario: ScenarioConfig,
    seed: int | None = None,
    stimulus=None,
) -> tuple[list[dict], SchoolState, SchoolState]:
    """Uncontrolled (or constant-stimulus) rollout; per-step summary rows."""
    params = scenario.model_params()
    ref = scenario.reference_sphere()
    base = seed if seed is not None else scenario.run["base_seed"]
    init_ss, noise_ss = np.random.SeedSequence(base).spawn(2)
    rng = np.random.Generator(np.random.PCG64(init_ss))
    state = initialize_school(params.n, ref, rng, scenario.init_radius)
    initial = state.copy()
    noise = NoiseModel.from_params(params, noise_ss) if params.noise_scale > 0 else None
    rows = []
    for k in range(scenario.run["steps"] + 1):
        c = mass_center(state)
        rows.append(
            {
                "k": k,
                "center_x": float(c[0]),
                "center_y": float(c[1]),
                "center_z": float(c[2]),
                "polarization": polarization(state),
                "reference_error": ref.distance(c),
            }
        )
        if k < scenario.run["steps"]:
            state = step(state, params, stimulus=stimulus, noise=noise)
    return rows, initial, state


def bound_audit_rows(
    n_states: int,
    seed: int,
    sizes: tuple[int, ...] = (6, 10, 16),
    kappas: tuple[float, ...] = (2.0, 8.0, 32.0),
    params: ModelParams | None = None,
    tol: float = 1e-9,
) -> tuple[list[dict], dict]:
    """Evaluate every analytic inequality on sampled valid states.

    Per state: the state-level residual against the static-weight bound (and
    against the centrality-weight bound when the orientation graph is strongly
    connected), the per-fish orientation-deviation and heading-residual
    checks, and a batch of normalization-residual draws against the quadratic
    envelope. Margins below -tol count as violations. Returns (rows, summary).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []
    violations = 0
    central_rows = 0
    for idx in range(n_states):
        n = int(sizes[idx % len(sizes)])
        kappa = float(kappas[(idx // len(sizes)) % len(kappas)])
        stimulated = bool(idx % 2)
        p = params
        if p is None or p.n != n:
            p = ModelParams(n=n)
        state, sets, stimulus = sample_analysis_state(
            rng, n, kappa, p, stimulated=stimulated
        )
        weights = uniform_weights(n)
        report = diagnostics(state, sets, p, stimulus, weights)
        residual = report.residual_norm
        s_bound = report.static_bound
        margins = [s_bound - residual]
        dev_lhs, dev_rhs = orientation_deviation_checks(state, sets, weights)
        dev_margin = float(np.min(dev_rhs - dev_lhs))
        head_lhs, head_rhs = heading_residual_checks(state, sets, p, stimulus, weights)
        head_margin = float(np.min(head_rhs - head_lhs))
        margins += [dev_margin, head_margin]
        graph = build_graph(sets)
        connected = is_strongly_connected(graph)
        c_margin = None
        if connected:
            central = eigenvector_centrality(graph)
            c_report = diagnostics(state, sets, p, stimulus, central)
            c_margin = c_report.centrality_bound - c_report.residual_norm
            margins.append(c_margin)
            central_rows += 1
        norm_margin = _normalization_margin(rng)
        margins.append(norm_margin)
        worst = float(min(margins))
        ok = worst >= -tol
        if not ok:
            violations += 1
        rows.append(
            {
                "state": idx,
                "n": n,
                "kappa": kappa,
                "stimulated": int(stimulated),
                "strongly_connected": int(connected),
                "residual_static": residual,
                "bound_static": s_bound,
                "margin_static": s_bound - residual,
                "margin_centrality": c_margin if c_margin is not None else "",
                "margin_orientation_deviation": dev_margin,
                "margin_heading_residual": head_margin,
                "margin_normalization": norm_margin,
                "worst_margin": worst,
                "ok": int(ok),
            }
        )
    summary = {
        "states": n_states,
        "violations": violations,
        "centrality_rows": central_rows,
        "tolerance": tol,
    }
    return rows, summary


def _normalization_margin(rng: np.random.Generator, draws: int = 8) -> float:
    """Worst margin of ||residual|| <= 2 ||y||^2 / ||x||^2 over random pairs."""
    worst = np.inf
    for _ in range(draws):
        x = rng.standard_normal(3) * float(10.0 ** rng.uniform(-2, 2))
        scale = float(10.0 ** rng.uniform(-3, 0.5))
        y = rng.standard_normal(3) * scale * float(np.linalg.norm(x))
        nx = float(np.linalg.norm(x))
        if nx < 1e-9 or float(np.linalg.norm(x + y)) < 1e-9:
            continue
        r = float(np.linalg.norm(normalization_residual(x, y)))
        envelope = 2.0 * float(np.linalg.norm(y)) ** 2 / nx**2
        worst = min(worst, envelope - r)
    return float(worst)
