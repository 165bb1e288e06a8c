"""Receding-horizon stimulus control of the school's mass center.

Every period of T steps the controller observes the school, predicts its mass
center over a lookahead horizon with one of three predictors, and picks a
schedule of unit-norm stimulus blocks (constant over T steps each) minimizing
the summed distance of the predicted center to a reference sphere surface.
Only the first block of the minimizer is kept; it is applied during the NEXT
window, one period after the observation, which models the solve latency. The
first window runs under a configurable initial stimulus (zero by default).

Predictors:
  orig     noise-free rollout of the full per-fish model
  static   reduced model with uniform aggregation weights
  dynamic  reduced model with eigenvector-centrality weights (falls back to
           uniform weights when the orientation graph is not strongly
           connected)
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, InvariantViolationError
from .model import (
    ModelParams,
    NoiseModel,
    SchoolState,
    classify_neighbors,
    mass_center,
    mean_heading,
    step,
)
from .network import build_graph, eigenvector_centrality, is_strongly_connected
from .reduction import freeze_aggregates, init_reduced, uniform_weights
from .vec import EPS_ZERO, as_vec3

PREDICTORS = ("orig", "static", "dynamic")


@dataclass
class ReferenceSphere:
    """Target set: the surface of a sphere."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = as_vec3(self.center)
        if not (self.radius > 0):
            raise ConfigError("reference radius must be positive")

    def distance(self, p) -> float:
        return abs(float(np.linalg.norm(np.asarray(p, dtype=float) - self.center)) - self.radius)


@dataclass
class ControllerConfig:
    period: int = 30
    horizon: int = 60
    predictor: str = "dynamic"
    restarts: int = 4
    max_iterations: int = 200
    tolerance: float = 1e-6
    initial_stimulus: np.ndarray | None = None

    def __post_init__(self):
        if self.period < 1:
            raise ConfigError("period must be at least 1")
        if self.horizon < self.period or self.horizon % self.period != 0:
            raise ConfigError("horizon must be a positive multiple of period")
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"predictor must be one of {PREDICTORS}")
        if self.restarts < 1 or self.max_iterations < 1:
            raise ConfigError("restarts and max_iterations must be positive")
        if self.initial_stimulus is not None:
            u0 = as_vec3(self.initial_stimulus)
            if float(np.linalg.norm(u0)) > 1.0 + 1e-9:
                raise ConfigError("initial stimulus must lie in the unit ball")
            self.initial_stimulus = u0

    @property
    def n_blocks(self) -> int:
        return self.horizon // self.period


@dataclass
class StimulusSchedule:
    """Piecewise-constant stimulus: blocks[b] holds for block_steps steps."""

    blocks: np.ndarray
    block_steps: int

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=float)
        if b.ndim != 2 or b.shape[1] != 3:
            raise ConfigError(f"blocks must be (B, 3), got {b.shape}")
        norms = np.linalg.norm(b, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvariantViolationError("schedule blocks must be unit vectors")
        self.blocks = b

    def block_at(self, offset: int) -> np.ndarray:
        idx = min(offset // self.block_steps, self.blocks.shape[0] - 1)
        return self.blocks[idx]


@dataclass
class SolveInfo:
    cost: float
    angles: np.ndarray
    n_evals: int
    solve_time: float
    budget_exceeded: bool
    centrality_fallback: bool = False
    excluded_count: int = 0
    degenerate_holds: int = 0


@dataclass
class WindowEvent:
    index: int
    observed_k: int
    apply_start: int
    apply_end: int
    block: np.ndarray
    cost: float
    n_evals: int
    solve_time: float
    budget_exceeded: bool
    centrality_fallback: bool
    excluded_count: int
    degenerate_holds: int


@dataclass
class MpcResult:
    errors: np.ndarray
    applied: np.ndarray
    events: list[WindowEvent]
    final_state: SchoolState
    predictor: str
    trajectory: list[SchoolState] | None = None

    @property
    def solve_times(self) -> list[float]:
        return [e.solve_time for e in self.events]


def blocks_from_angles(angles) -> np.ndarray:
    """Map interleaved (azimuth, elevation) pairs to unit vectors."""
    a = np.asarray(angles, dtype=float).reshape(-1, 2)
    az, el = a[:, 0], a[:, 1]
    ce = np.cos(el)
    b = np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=1)
    return b / np.linalg.norm(b, axis=1, keepdims=True)


def angles_from_block(u) -> tuple[float, float]:
    v = as_vec3(u)
    return (
        float(math.atan2(v[1], v[0])),
        float(math.asin(max(-1.0, min(1.0, v[2])))),
    )


def tangent_direction(state: SchoolState, ref: ReferenceSphere) -> np.ndarray:
    """Unit stimulus along the sphere tangent closest to the mean heading.

    Degenerate geometries (center at the sphere origin, heading parallel to
    the radial direction) fall back to deterministic perpendicular choices.
    """
    c = mass_center(state) - ref.center
    cn = float(np.linalg.norm(c))
    d = mean_heading(state)
    dn = float(np.linalg.norm(d))
    if cn <= EPS_ZERO:
        if dn <= EPS_ZERO:
            return np.array([1.0, 0.0, 0.0])
        return d / dn
    rhat = c / cn
    t = d - float(np.dot(d, rhat)) * rhat
    tn = float(np.linalg.norm(t))
    if tn <= 1e-9:
        idx = int(np.argmin(np.abs(rhat)))
        basis = np.zeros(3)
        basis[idx] = 1.0
        t = np.cross(rhat, basis)
        tn = float(np.linalg.norm(t))
    return t / tn


class _FullRollout:
    """Horizon cost via noise-free rollout of the per-fish model."""

    def __init__(self, state, params, ref, period, horizon, current):
        self.state = state.copy()
        self.params = params
        self.ref = ref
        self.period = period
        self.horizon = horizon
        self.current = np.array(current, dtype=float)
        self.degenerate_holds = 0

    def cost(self, blocks: np.ndarray) -> float:
        s = self.state.copy()
        total = 0.0
        t = 0
        segments = [(self.period, self.current)]
        segments += [(self.period, blocks[b]) for b in range(blocks.shape[0])]
        for steps_m, u in segments:
            for _ in range(steps_m):
                s = step(s, self.params, stimulus=u)
                t += 1
                if t >= self.period:
                    total += self.ref.distance(mass_center(s))
        return total


class _ReducedRollout:
    """Horizon cost via the frozen reduced model; plain-float inner loop."""

    def __init__(self, state, sets, params, ref, period, horizon, current, weights):
        red = init_reduced(state)
        agg = freeze_aggregates(state, sets, params, weights, on_zero_degree="exclude")
        self.excluded_count = agg.excluded_count
        self.c0 = tuple(float(v) for v in red.center)
        self.d0 = tuple(float(v) for v in red.direction)
        self.nv = math.sqrt(sum(v * v for v in self.d0))
        self.a = tuple(float(v) for v in agg.attraction)
        self.gain = float(agg.stim_gain)
        self.L = float(agg.step_length)
        self.period = period
        self.current = tuple(float(v) for v in current)
        self.ox, self.oy, self.oz = (float(v) for v in ref.center)
        self.radius = float(ref.radius)
        self.degenerate_holds = 0

    def cost(self, blocks: np.ndarray) -> float:
        cx, cy, cz = self.c0
        dx, dy, dz = self.d0
        nv = self.nv
        ax, ay, az = self.a
        gain = self.gain
        L = self.L
        period = self.period
        total = 0.0
        t = 0
        segs = [self.current] + [tuple(map(float, blocks[b])) for b in range(blocks.shape[0])]
        for ux, uy, uz in segs:
            fx = ax + gain * ux
            fy = ay + gain * uy
            fz = az + gain * uz
            for _ in range(period):
                cx += L * dx
                cy += L * dy
                cz += L * dz
                gx = dx + fx
                gy = dy + fy
                gz = dz + fz
                gn = math.sqrt(gx * gx + gy * gy + gz * gz)
                if gn > EPS_ZERO:
                    sc = nv / gn
                    dx, dy, dz = gx * sc, gy * sc, gz * sc
                else:
                    self.degenerate_holds += 1
                t += 1
                if t >= period:
                    rx = cx - self.ox
                    ry = cy - self.oy
                    rz = cz - self.oz
                    total += abs(math.sqrt(rx * rx + ry * ry + rz * rz) - self.radius)
        return total


def _build_context(state, params, cfg, ref, current):
    """Predictor context for one solve, plus fallback bookkeeping."""
    fallback = False
    excluded = 0
    if cfg.predictor == "orig":
        ctx = _FullRollout(state, params, ref, cfg.period, cfg.horizon, current)
    else:
        sets = classify_neighbors(state, params)
        if cfg.predictor == "dynamic":
            graph = build_graph(sets)
            if is_strongly_connected(graph):
                weights = eigenvector_centrality(graph)
            else:
                weights = uniform_weights(state.n)
                fallback = True
        else:
            weights = uniform_weights(state.n)
        ctx = _ReducedRollout(
            state, sets, params, ref, cfg.period, cfg.horizon, current, weights
        )
        excluded = ctx.excluded_count
    return ctx, fallback, excluded


def horizon_cost(
    state: SchoolState,
    schedule: StimulusSchedule,
    params: ModelParams,
    cfg: ControllerConfig,
    ref: ReferenceSphere,
    current=None,
) -> float:
    """Predicted tracking cost of a schedule from an observed state.

    The rollout covers one period under the currently applied stimulus
    (zero if None) followed by the schedule blocks; the cost sums the
    center-to-reference distances at the horizon_performance steps from the
    end of the current window through the lookahead horizon.
    """
    if schedule.block_steps != cfg.period or schedule.blocks.shape[0] != cfg.n_blocks:
        raise ConfigError("schedule does not match the controller configuration")
    cur = np.zeros(3) if current is None else as_vec3(current)
    ctx, _, _ = _build_context(state, params, cfg, ref, cur)
    return ctx.cost(schedule.blocks)


def optimize_schedule(
    state: SchoolState,
    params: ModelParams,
    cfg: ControllerConfig,
    ref: ReferenceSphere,
    rng: np.random.Generator,
    current=None,
    warm_angles: np.ndarray | None = None,
) -> tuple[StimulusSchedule, SolveInfo]:
    """Pick the stimulus schedule minimizing the predicted tracking cost.

    Nelder-Mead over the spherical angles of the blocks, restarted from the
    shifted previous solution (or the tangent heuristic when absent), the
    tangent heuristic, and seeded random draws. The returned schedule is the
    best point ever evaluated; exhausting the iteration budget only sets a
    flag. Ties in cost break toward the lexicographically smallest angles.
    """
    t0 = time.perf_counter()
    cur = np.zeros(3) if current is None else as_vec3(current)
    ctx, fallback, excluded = _build_context(state, params, cfg, ref, cur)
    n_blocks = cfg.n_blocks

    best_cost = math.inf
    best_angles: tuple | None = None
    n_evals = 0

    def objective(angles):
        nonlocal best_cost, best_angles, n_evals
        c = ctx.cost(blocks_from_angles(angles))
        n_evals += 1
        key = tuple(float(a) for a in angles)
        if c < best_cost or (c == best_cost and (best_angles is None or key < best_angles)):
            best_cost = c
            best_angles = key
        return c

    tangent = tangent_direction(state, ref)
    taz, tel = angles_from_block(tangent)
    tangent_angles = np.tile([taz, tel], n_blocks)
    if warm_angles is not None and len(warm_angles) == 2 * n_blocks:
        w = np.asarray(warm_angles, dtype=float).reshape(-1, 2)
        shifted = np.vstack([w[1:], w[-1:]]) if n_blocks > 1 else w
        first = shifted.reshape(-1)
    else:
        first = tangent_angles
    starts = [first, tangent_angles]
    while len(starts) < cfg.restarts:
        az = rng.uniform(-math.pi, math.pi, n_blocks)
        el = np.arcsin(rng.uniform(-1.0, 1.0, n_blocks))
        starts.append(np.stack([az, el], axis=1).reshape(-1))
    starts = starts[: cfg.restarts]

    budget_exceeded = False
    for x0 in starts:
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": cfg.max_iterations,
                "xatol": cfg.tolerance,
                "fatol": cfg.tolerance,
            },
        )
        if not res.success:
            budget_exceeded = True

    angles = np.array(best_angles)
    schedule = StimulusSchedule(blocks_from_angles(angles), cfg.period)
    info = SolveInfo(
        cost=best_cost,
        angles=angles,
        n_evals=n_evals,
        solve_time=time.perf_counter() - t0,
        budget_exceeded=budget_exceeded,
        centrality_fallback=fallback,
        excluded_count=excluded,
        degenerate_holds=getattr(ctx, "degenerate_holds", 0),
    )
    return schedule, info


def run_mpc(
    initial_state: SchoolState,
    params: ModelParams,
    cfg: ControllerConfig,
    ref: ReferenceSphere,
    steps: int,
    seed,
    record_trajectory: bool = False,
) -> MpcResult:
    """Closed loop: noisy plant, periodic solves, one-window apply delay.

    The stimulus applied during window [l*T, (l+1)*T) was decided from the
    observation at (l-1)*T (the configured initial stimulus for l = 0), so no
    step ever depends on a observation that has not happened yet. Runtime
    checks raise InvariantViolationError if scheduling ever disagrees with
    that protocol.
    """
    initial_state.validate()
    if steps < 1:
        raise ConfigError("steps must be positive")
    T = cfg.period
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    noise_ss, opt_ss = ss.spawn(2)
    noise = NoiseModel.from_params(params, noise_ss) if params.noise_scale > 0 else None
    opt_rng = np.random.Generator(np.random.PCG64(opt_ss))

    state = initial_state.copy()
    errors = np.empty(steps + 1)
    errors[0] = ref.distance(mass_center(state))
    applied = np.zeros((steps, 3))
    events: list[WindowEvent] = []
    trajectory = [state.copy()] if record_trajectory else None
    current = (
        np.zeros(3) if cfg.initial_stimulus is None else cfg.initial_stimulus.copy()
    )
    pending: np.ndarray | None = None
    prev_angles: np.ndarray | None = None

    for k in range(steps):
        if k % T == 0:
            if pending is not None:
                current = pending
                pending = None
            if k + T < steps:
                if state.k != k:
                    raise InvariantViolationError(
                        f"observation at step {state.k}, expected {k}"
                    )
                schedule, info = optimize_schedule(
                    state, params, cfg, ref, opt_rng, current, prev_angles
                )
                pending = schedule.blocks[0].copy()
                if abs(float(np.linalg.norm(pending)) - 1.0) > 1e-9:
                    raise InvariantViolationError("solver returned a non-unit block")
                prev_angles = info.angles
                ev = WindowEvent(
                    index=k // T,
                    observed_k=k,
                    apply_start=k + T,
                    apply_end=min(k + 2 * T, steps),
                    block=pending.copy(),
                    cost=info.cost,
                    n_evals=info.n_evals,
                    solve_time=info.solve_time,
                    budget_exceeded=info.budget_exceeded,
                    centrality_fallback=info.centrality_fallback,
                    excluded_count=info.excluded_count,
                    degenerate_holds=info.degenerate_holds,
                )
                if ev.apply_start != ev.observed_k + T:
                    raise InvariantViolationError("apply window must start one period after the observation")
                events.append(ev)
        applied[k] = current
        state = step(state, params, stimulus=current, noise=noise)
        if state.k != k + 1:
            raise InvariantViolationError("plant step counter out of sync")
        errors[k + 1] = ref.distance(mass_center(state))
        if record_trajectory:
            trajectory.append(state.copy())

    return MpcResult(
        errors=errors,
        applied=applied,
        events=events,
        final_state=state,
        predictor=cfg.predictor,
        trajectory=trajectory,
    )
