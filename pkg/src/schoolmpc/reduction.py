"""Reduced-order model of the school's mass center and mean heading.

A weighted mean heading <V>_w = sum_i w_i V_i, together with aggregates of
the attraction and stimulus terms frozen at an observation instant, predicts
the school without per-fish bookkeeping:

    c(k+1) = c(k) + tau * speed * Vhat(k)
    Vhat(k+1) = ||Vhat(k)|| * phi(Vhat(k) + attraction + stimulus(k))

where phi normalizes. The per-step aggregation error of the heading update
admits computable upper bounds from three state statistics per fish: the
misalignment 1 - ||O_i||/n_i, the spread of neighbor heading angles, and the
ratio of the non-orientation drive to the orientation force. Two weightings
are supported: uniform weights, and eigenvector-centrality weights for which
the weighted mean heading aggregates the orientation forces exactly and the
spread statistic drops from the bound.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolatedError, WeightError, ZeroArgumentError, ZeroOrientationDegreeError
from .model import ModelParams, NeighborSets, SchoolState, mass_center, mean_heading, stimulus_rows
from .vec import EPS_ZERO, check_weights, normalize_rows

log = logging.getLogger(__name__)


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass
class ReducedState:
    """Predicted mass center and (not necessarily unit) mean heading."""

    center: np.ndarray
    direction: np.ndarray


@dataclass
class FrozenAggregates:
    """Aggregation context captured at an observation instant.

    attraction is sum_i (w_i / n_i) * eta * A_i; stim_coeff[i] = w_i * xi_i / n_i
    converts a per-fish stimulus into its aggregate, and stim_gain is its sum,
    used when the same stimulus drives every fish. Fish with empty orientation
    sets may be excluded (weights renormalized over the rest); included marks
    the fish that entered the aggregates.
    """

    weights: np.ndarray
    degrees: np.ndarray
    attraction: np.ndarray
    stim_coeff: np.ndarray
    stim_gain: float
    step_length: float
    included: np.ndarray
    excluded_count: int = 0


def init_reduced(state: SchoolState) -> ReducedState:
    """Observe the reduced state: mean position and plain mean heading."""
    return ReducedState(mass_center(state), mean_heading(state))


def freeze_aggregates(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    weights,
    on_zero_degree: str = "raise",
) -> FrozenAggregates:
    """Capture degrees, attraction, and stimulus coefficients for prediction.

    Every fish needs a nonempty orientation set; on_zero_degree selects the
    strict behavior ("raise") or the controller fallback ("exclude"), which
    drops offending fish from the aggregates and renormalizes the remaining
    weights.
    """
    w = check_weights(weights, state.n)
    deg = sets.orientation_degrees
    included = deg > 0
    excluded = int(state.n - included.sum())
    if excluded:
        if on_zero_degree == "raise":
            raise ZeroOrientationDegreeError(np.flatnonzero(~included))
        if on_zero_degree != "exclude":
            raise ValueError(f"unknown on_zero_degree={on_zero_degree!r}")
        total = float(w[included].sum())
        if total <= 0.0:
            raise WeightError("all weight rests on fish with empty orientation sets")
        w = np.where(included, w, 0.0) / total
        log.warning("excluded %d fish with empty orientation sets", excluded)
    deg_safe = np.where(included, deg, 1).astype(float)
    # attraction force rows: unit displacements summed over attraction sets
    diff = state.positions[None, :, :] - state.positions[:, None, :]
    dn = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dn, np.inf)
    att = (sets.attraction[:, :, None] * (diff / dn[:, :, None])).sum(axis=1)
    coeff = w / deg_safe
    aggregate_attraction = (coeff[:, None] * (params.attraction_gain * att)).sum(axis=0)
    stim_coeff = coeff * params.sensitivity
    return FrozenAggregates(
        weights=w,
        degrees=deg.astype(int),
        attraction=aggregate_attraction,
        stim_coeff=stim_coeff,
        stim_gain=float(stim_coeff.sum()),
        step_length=params.step_length,
        included=included,
        excluded_count=excluded,
    )


def aggregate_stimulus(agg: FrozenAggregates, stimulus) -> np.ndarray:
    """Aggregate a stimulus: stim_gain * u for a shared (3,) vector, or the
    coefficient-weighted sum of an (N, 3) stack. None means zero."""
    if stimulus is None:
        return np.zeros(3)
    u = np.asarray(stimulus, dtype=float)
    if u.shape == (3,):
        return agg.stim_gain * u
    if u.shape == (agg.weights.shape[0], 3):
        return agg.stim_coeff @ u
    raise WeightError(f"stimulus shape {u.shape} does not fit the aggregates")


def predict_step(
    red: ReducedState,
    agg: FrozenAggregates,
    stimulus=None,
    degenerate: str = "hold",
) -> ReducedState:
    """One reduced-model step; preserves ||direction|| exactly.

    When the normalization argument direction + attraction + stimulus is
    numerically zero the direction is held for the step (degenerate="hold",
    logged) or ZeroArgumentError is raised (degenerate="raise").
    """
    center = red.center + agg.step_length * red.direction
    g = red.direction + agg.attraction + aggregate_stimulus(agg, stimulus)
    gn = float(np.linalg.norm(g))
    if gn <= EPS_ZERO:
        if degenerate == "raise":
            raise ZeroArgumentError("degenerate heading update argument")
        if degenerate != "hold":
            raise ValueError(f"unknown degenerate={degenerate!r}")
        log.warning("degenerate heading update argument; holding direction")
        return ReducedState(center, red.direction.copy())
    scale = float(np.linalg.norm(red.direction)) / gn
    return ReducedState(center, scale * g)


@dataclass
class DiagnosticReport:
    """Per-fish statistics and the resulting aggregation error bounds.

    polarization[i] = ||O_i|| / n_i, misalignment its complement;
    force_ratio[i] compares the attraction-plus-stimulus drive to the
    orientation force; angle_spread[i] is the weighted quadratic spread of
    neighbor heading angles. residual is the one-step aggregation error of the
    weighted heading update; static_bound and centrality_bound are its upper
    bounds for the two weightings (the latter valid under centrality weights).
    """

    weights: np.ndarray
    degrees: np.ndarray
    polarization: np.ndarray
    misalignment: np.ndarray
    force_ratio: np.ndarray
    angle_spread: np.ndarray
    weighted_heading: np.ndarray
    weighted_misalignment: float
    aggregate_attraction: np.ndarray
    aggregate_stimulus: np.ndarray
    residual: np.ndarray
    residual_norm: float
    static_bound: float
    centrality_bound: float


class _BoundTerms:
    """Shared per-state quantities behind the residual and both bounds."""

    def __init__(
        self,
        state: SchoolState,
        sets: NeighborSets,
        params: ModelParams,
        stimulus,
        weights,
    ):
        n = state.n
        w = check_weights(weights, n)
        rep_rows = np.flatnonzero(sets.repulsion.any(axis=1))
        if rep_rows.size:
            raise AssumptionViolatedError("nonempty_repulsion_set", int(rep_rows[0]))
        deg = sets.orientation_degrees
        zero_deg = np.flatnonzero(deg == 0)
        if zero_deg.size:
            raise AssumptionViolatedError("zero_orientation_degree", int(zero_deg[0]))
        V = state.headings
        ori_force = sets.orientation.astype(float) @ V
        ori_norm = np.linalg.norm(ori_force, axis=1)
        weak = np.flatnonzero(ori_norm <= EPS_ZERO)
        if weak.size:
            raise AssumptionViolatedError("zero_orientation_force", int(weak[0]))
        diff = state.positions[None, :, :] - state.positions[:, None, :]
        dn = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dn, np.inf)
        att = (sets.attraction[:, :, None] * (diff / dn[:, :, None])).sum(axis=1)
        drive = params.attraction_gain * att + stimulus_rows(params, stimulus, n)
        desired = ori_force + drive
        flat = np.flatnonzero(np.linalg.norm(desired, axis=1) <= EPS_ZERO)
        if flat.size:
            raise AssumptionViolatedError("zero_desired_direction", int(flat[0]))
        weighted_heading = w @ V
        wh_norm = float(np.linalg.norm(weighted_heading))
        if wh_norm <= EPS_ZERO:
            raise AssumptionViolatedError("zero_weighted_mean_heading")

        degf = deg.astype(float)
        # clamp float dust: ||O_i|| <= n_i and ||<V>_w|| <= 1 hold exactly
        pol = np.minimum(ori_norm / degf, 1.0)
        mis = 1.0 - pol
        ratio = np.linalg.norm(drive, axis=1) / ori_norm
        gram = np.clip(V @ V.T, -1.0, 1.0)
        ang_sq = np.arccos(gram) ** 2
        dev = np.abs(sets.orientation.astype(float) - degf[:, None] * w[None, :])
        spread = ((dev @ ang_sq) * dev).sum(axis=1) / (2.0 * degf**2)
        spread = np.maximum(spread, 0.0)

        self.n = n
        self.weights = w
        self.degrees = deg
        self.ori_force = ori_force
        self.ori_norm = ori_norm
        self.drive = drive
        self.desired = desired
        self.headings = V
        self.weighted_heading = weighted_heading
        self.wh_norm = wh_norm
        self.weighted_misalignment = 1.0 - min(wh_norm, 1.0)
        self.polarization = pol
        self.misalignment = mis
        self.force_ratio = ratio
        self.angle_spread = spread
        coeff = w / degf
        self.aggregate_attraction = (
            coeff[:, None] * (params.attraction_gain * att)
        ).sum(axis=0)
        self.aggregate_stimulus = (coeff[:, None] * stimulus_rows(params, stimulus, n)).sum(axis=0)

    def residual(self) -> np.ndarray:
        target = self.weighted_heading + self.aggregate_attraction + self.aggregate_stimulus
        tn = float(np.linalg.norm(target))
        if tn <= EPS_ZERO:
            raise AssumptionViolatedError("zero_aggregate_argument")
        predicted = self.wh_norm * (target / tn)
        return self.weights @ normalize_rows(self.desired) - predicted

    def _common_terms(self) -> tuple[float, np.ndarray]:
        w_agg = self.aggregate_attraction + self.aggregate_stimulus
        lead = 2.0 * float(np.dot(w_agg, w_agg)) / self.wh_norm
        root = np.sqrt(self.angle_spread)
        cross = 2.0 * np.sum(
            self.weights
            * self.force_ratio
            * (self.weighted_misalignment + self.force_ratio + 2.0 * self.misalignment + root)
        )
        return lead + cross, root

    def static_bound(self) -> float:
        base, root = self._common_terms()
        return base + float(np.sum(self.weights * (self.misalignment + root)))

    def centrality_bound(self) -> float:
        base, _ = self._common_terms()
        return base + float(np.sum(self.weights * self.misalignment))


def diagnostics(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    stimulus,
    weights,
) -> DiagnosticReport:
    """Evaluate the per-fish statistics, the residual, and both bounds."""
    t = _BoundTerms(state, sets, params, stimulus, weights)
    residual = t.residual()
    return DiagnosticReport(
        weights=t.weights,
        degrees=t.degrees.astype(int),
        polarization=t.polarization,
        misalignment=t.misalignment,
        force_ratio=t.force_ratio,
        angle_spread=t.angle_spread,
        weighted_heading=t.weighted_heading,
        weighted_misalignment=t.weighted_misalignment,
        aggregate_attraction=t.aggregate_attraction,
        aggregate_stimulus=t.aggregate_stimulus,
        residual=residual,
        residual_norm=float(np.linalg.norm(residual)),
        static_bound=t.static_bound(),
        centrality_bound=t.centrality_bound(),
    )


def aggregation_residual(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    stimulus,
    weights,
) -> np.ndarray:
    """One-step aggregation error of the weighted heading update.

    Difference between the weighted mean of the per-fish normalized desired
    directions and the reduced-model heading update evaluated on the same
    state. Raises AssumptionViolatedError if the state violates any analysis
    precondition (a repulsion pair, an empty orientation set, a vanishing
    orientation force or desired direction, or a vanishing weighted heading).
    """
    return _BoundTerms(state, sets, params, stimulus, weights).residual()


def static_weight_bound(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    stimulus,
    weights,
) -> float:
    """Upper bound on ||aggregation_residual|| valid for any fixed weights."""
    return _BoundTerms(state, sets, params, stimulus, weights).static_bound()


def centrality_weight_bound(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    stimulus,
    weights,
) -> float:
    """Upper bound on ||aggregation_residual|| under eigenvector-centrality
    weights, where orientation forces aggregate exactly and the angle-spread
    sum drops out."""
    return _BoundTerms(state, sets, params, stimulus, weights).centrality_bound()


def orientation_deviation_check(
    state: SchoolState,
    sets: NeighborSets,
    weights,
    fish: int,
) -> tuple[float, float]:
    """(lhs, rhs) of ||O_i - n_i <V>_w|| <= n_i sqrt(angle_spread_i)."""
    w = check_weights(weights, state.n)
    deg = int(sets.orientation_degrees[fish])
    if deg == 0:
        raise AssumptionViolatedError("zero_orientation_degree", fish)
    V = state.headings
    ori_force = sets.orientation[fish].astype(float) @ V
    gram = np.clip(V @ V.T, -1.0, 1.0)
    ang_sq = np.arccos(gram) ** 2
    dev = np.abs(sets.orientation[fish].astype(float) - deg * w)
    spread = float((dev @ ang_sq @ dev) / (2.0 * deg**2))
    lhs = float(np.linalg.norm(ori_force - deg * (w @ V)))
    rhs = deg * np.sqrt(max(spread, 0.0))
    return lhs, rhs


def orientation_deviation_checks(
    state: SchoolState,
    sets: NeighborSets,
    weights,
) -> tuple[np.ndarray, np.ndarray]:
    """orientation_deviation_check for every fish in one pass.

    Returns (lhs, rhs) arrays of length N; the shared N x N angle matrix is
    built once instead of once per fish.
    """
    w = check_weights(weights, state.n)
    deg = sets.orientation_degrees
    zero = np.flatnonzero(deg == 0)
    if zero.size:
        raise AssumptionViolatedError("zero_orientation_degree", int(zero[0]))
    V = state.headings
    degf = deg.astype(float)
    ori = sets.orientation.astype(float)
    gram = np.clip(V @ V.T, -1.0, 1.0)
    ang_sq = np.arccos(gram) ** 2
    dev = np.abs(ori - degf[:, None] * w[None, :])
    spread = ((dev @ ang_sq) * dev).sum(axis=1) / (2.0 * degf**2)
    lhs = np.linalg.norm(ori @ V - degf[:, None] * (w @ V)[None, :], axis=1)
    rhs = degf * np.sqrt(np.maximum(spread, 0.0))
    return lhs, rhs


def heading_residual_check(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    stimulus,
    weights,
    fish: int,
) -> tuple[float, float]:
    """(lhs, rhs) of the per-fish desired-direction linearization bound.

    lhs is the norm of phi(D_i) minus its linearization around the weighted
    mean heading; rhs combines the misalignment, force ratio, angle spread,
    and weighted misalignment of the state.
    """
    t = _BoundTerms(state, sets, params, stimulus, weights)
    i = fish
    vw = t.weighted_heading
    wn2 = float(np.dot(vw, vw))
    w_i = t.drive[i]
    deg = float(t.degrees[i])
    lin = vw + w_i / deg - (float(np.dot(w_i, vw)) / (deg * wn2)) * vw
    phi_d = t.desired[i] / float(np.linalg.norm(t.desired[i]))
    lhs = float(np.linalg.norm(phi_d - lin))
    rho = float(t.force_ratio[i])
    mis = float(t.misalignment[i])
    root = float(np.sqrt(t.angle_spread[i]))
    rhs = (
        2.0 * t.weighted_misalignment * rho
        + 2.0 * rho**2
        + mis * (1.0 + 4.0 * rho)
        + (1.0 + 2.0 * rho) * root
    )
    return lhs, rhs


def heading_residual_checks(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    stimulus,
    weights,
) -> tuple[np.ndarray, np.ndarray]:
    """heading_residual_check for every fish from one shared term build."""
    t = _BoundTerms(state, sets, params, stimulus, weights)
    vw = t.weighted_heading
    wn2 = float(np.dot(vw, vw))
    degf = t.degrees.astype(float)
    lin = (
        vw[None, :]
        + t.drive / degf[:, None]
        - ((t.drive @ vw) / (degf * wn2))[:, None] * vw[None, :]
    )
    phi_d = t.desired / np.linalg.norm(t.desired, axis=1, keepdims=True)
    lhs = np.linalg.norm(phi_d - lin, axis=1)
    rho = t.force_ratio
    root = np.sqrt(t.angle_spread)
    rhs = (
        2.0 * t.weighted_misalignment * rho
        + 2.0 * rho**2
        + t.misalignment * (1.0 + 4.0 * rho)
        + (1.0 + 2.0 * rho) * root
    )
    return lhs, rhs
