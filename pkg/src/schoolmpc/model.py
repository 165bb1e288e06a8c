"""Zonal fish-school dynamics.

Each fish carries a position and a unit heading. Per step it classifies the
other fish into repulsion, orientation, and attraction zones restricted to a
viewing cone, forms a desired direction from zone forces plus an optional
external stimulus, turns toward it by at most tau * turning_rate, and then an
optional noise rotation kicks the heading toward a random direction. Positions
advance along the pre-turn heading: x(k+1) = x(k) + tau * speed * V(k).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentFishError, DimensionMismatchError, ConfigError
from .vec import EPS_ZERO, angles_between_rows, rotate_rows_toward

UNIT_NORM_TOL = 1e-9


@dataclass
class ModelParams:
    """Physical and behavioral parameters of the school.

    sensitivity may be a scalar (shared by all fish) or a length-n array; it
    scales the external stimulus per fish. view_half_angle is the half-angle
    of the viewing cone, so pi means no blind zone.
    """

    n: int
    speed: float = 50.0
    tau: float = 0.1
    turning_rate: float = 0.69
    view_half_angle: float = 0.75 * math.pi
    attraction_gain: float = 1.0
    repulsion_radius: float = 50.0
    orientation_radius: float = 750.0
    attraction_radius: float = 1000.0
    sensitivity: float | np.ndarray = 10.0
    noise_scale: float = 1.0
    noise_base: float = 0.35

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        xi = np.asarray(self.sensitivity, dtype=float)
        if xi.ndim == 0:
            xi = np.full(self.n, float(xi))
        if xi.shape != (self.n,):
            raise DimensionMismatchError(
                f"sensitivity shape {xi.shape} does not match n={self.n}"
            )
        if not np.all(np.isfinite(xi)) or np.any(xi < 0):
            raise ConfigError("sensitivity must be finite and nonnegative")
        xi.flags.writeable = False
        self.sensitivity = xi
        if not (0 < self.repulsion_radius < self.orientation_radius < self.attraction_radius):
            raise ConfigError("radii must satisfy 0 < r_r < r_o < r_a")
        if not (0 < self.view_half_angle <= math.pi):
            raise ConfigError("view_half_angle must lie in (0, pi]")
        for name in ("speed", "tau"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("turning_rate", "attraction_gain", "noise_scale", "noise_base"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    @property
    def max_turn(self) -> float:
        """Largest heading change per step from the desired-direction turn."""
        return self.tau * self.turning_rate

    @property
    def step_length(self) -> float:
        return self.tau * self.speed


@dataclass
class SchoolState:
    """Discrete-time state: step index, positions (N, 3), unit headings (N, 3)."""

    k: int
    positions: np.ndarray
    headings: np.ndarray

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def validate(self) -> None:
        x = self.positions
        v = self.headings
        if x.ndim != 2 or x.shape[1] != 3 or v.shape != x.shape:
            raise DimensionMismatchError(
                f"positions {x.shape} and headings {v.shape} must both be (N, 3)"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("state contains non-finite values")
        norms = np.linalg.norm(v, axis=1)
        worst = float(np.max(np.abs(norms - 1.0))) if len(norms) else 0.0
        if worst > UNIT_NORM_TOL:
            raise ValueError(f"headings deviate from unit norm by {worst:g}")

    def copy(self) -> "SchoolState":
        return SchoolState(self.k, self.positions.copy(), self.headings.copy())

    def to_dict(self) -> dict:
        return {
            "k": int(self.k),
            "x": self.positions.tolist(),
            "V": self.headings.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchoolState":
        state = cls(
            int(d["k"]),
            np.asarray(d["x"], dtype=float),
            np.asarray(d["V"], dtype=float),
        )
        state.validate()
        return state

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "SchoolState":
        return cls.from_dict(json.loads(s))


@dataclass
class NeighborSets:
    """Zone membership masks; row i holds the neighbor sets of fish i."""

    repulsion: np.ndarray
    orientation: np.ndarray
    attraction: np.ndarray

    @property
    def orientation_degrees(self) -> np.ndarray:
        return self.orientation.sum(axis=1)

    def indices(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index arrays (repulsion, orientation, attraction) for fish i."""
        return (
            np.flatnonzero(self.repulsion[i]),
            np.flatnonzero(self.orientation[i]),
            np.flatnonzero(self.attraction[i]),
        )


@dataclass
class Forces:
    repulsion: np.ndarray
    orientation: np.ndarray
    attraction: np.ndarray
    desired: np.ndarray


@dataclass
class NoiseModel:
    """Angular noise: rotate each heading toward a uniform random direction.

    Angles are scale * base * sqrt(tau) * |standard normal|. All draws come
    from one generator, in fish-index order, so runs are reproducible.
    """

    rng: np.random.Generator
    scale: float
    base: float
    tau: float

    @classmethod
    def from_params(cls, params: ModelParams, seed) -> "NoiseModel":
        return cls(
            rng=np.random.Generator(np.random.PCG64(seed)),
            scale=params.noise_scale,
            base=params.noise_base,
            tau=params.tau,
        )

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        g = self.rng.standard_normal((n, 3))
        norms = np.linalg.norm(g, axis=1)
        bad = norms <= EPS_ZERO
        if np.any(bad):
            g[bad] = (1.0, 0.0, 0.0)
            norms[bad] = 1.0
        chi = g / norms[:, None]
        eps = self.scale * self.base * math.sqrt(self.tau) * np.abs(
            self.rng.standard_normal(n)
        )
        return chi, eps


def _displacements(state: SchoolState):
    x = state.positions
    d = x[None, :, :] - x[:, None, :]
    dist = np.linalg.norm(d, axis=2)
    return d, dist


def classify_neighbors(state: SchoolState, params: ModelParams) -> NeighborSets:
    """Partition visible fish into repulsion / orientation / attraction zones.

    Fish j belongs to a zone of fish i when the viewing angle from heading i
    to the displacement is at most view_half_angle and the distance falls in
    (0, r_r], (r_r, r_o], or (r_o, r_a] respectively (closed right ends, no
    tolerance band). Coincident fish cannot be assigned a direction and raise.
    """
    d, dist = _displacements(state)
    n = state.n
    if n > 1:
        off = ~np.eye(n, dtype=bool)
        if np.any(dist[off] <= EPS_ZERO):
            ii, jj = np.nonzero((dist <= EPS_ZERO) & off)
            raise CoincidentFishError(int(ii[0]), int(jj[0]))
    np.fill_diagonal(dist, np.inf)
    cos_view = np.einsum("id,ijd->ij", state.headings, d) / dist
    in_cone = cos_view >= math.cos(params.view_half_angle)
    repulsion = in_cone & (dist <= params.repulsion_radius)
    orientation = in_cone & (dist > params.repulsion_radius) & (dist <= params.orientation_radius)
    attraction = in_cone & (dist > params.orientation_radius) & (dist <= params.attraction_radius)
    return NeighborSets(repulsion, orientation, attraction)


def stimulus_rows(params: ModelParams, stimulus, n: int) -> np.ndarray:
    """Per-fish stimulus term sensitivity_i * u_i as an (N, 3) stack.

    stimulus may be None (zeros), a single (3,) vector broadcast to all fish,
    or an (N, 3) stack.
    """
    if stimulus is None:
        return np.zeros((n, 3))
    u = np.asarray(stimulus, dtype=float)
    if u.shape == (3,):
        u = np.broadcast_to(u, (n, 3))
    if u.shape != (n, 3):
        raise DimensionMismatchError(f"stimulus shape {u.shape}, expected (3,) or ({n}, 3)")
    return params.sensitivity[:, None] * u


def compute_forces(
    state: SchoolState,
    sets: NeighborSets,
    params: ModelParams,
    stimulus=None,
) -> Forces:
    """Zone forces and the desired direction for every fish.

    Repulsion pushes away from unit displacements, orientation sums neighbor
    headings, attraction pulls along unit displacements. A nonempty repulsion
    set overrides everything; otherwise social terms plus the stimulus drive
    the fish, and a fish with no input keeps its heading.
    """
    d, dist = _displacements(state)
    np.fill_diagonal(dist, np.inf)
    unit_d = d / dist[:, :, None]
    rep = -(sets.repulsion[:, :, None] * unit_d).sum(axis=1)
    ori = sets.orientation.astype(float) @ state.headings
    att = (sets.attraction[:, :, None] * unit_d).sum(axis=1)
    stim = stimulus_rows(params, stimulus, state.n)
    social = ori + params.attraction_gain * att + stim
    has_rep = sets.repulsion.any(axis=1)
    has_social = (
        sets.orientation.any(axis=1)
        | sets.attraction.any(axis=1)
        | (np.linalg.norm(stim, axis=1) > EPS_ZERO)
    )
    desired = np.where(
        has_rep[:, None], rep, np.where(has_social[:, None], social, state.headings)
    )
    return Forces(rep, ori, att, desired)


def step(
    state: SchoolState,
    params: ModelParams,
    stimulus=None,
    noise: NoiseModel | None = None,
) -> SchoolState:
    """Advance the school by one step.

    Headings turn toward the desired direction by min(angle, max_turn), then
    the noise rotation (if any) is applied on top. Positions move along the
    pre-turn headings. With noise=None the update is deterministic and equals
    the noisy update with all noise angles zero.
    """
    sets = classify_neighbors(state, params)
    forces = compute_forces(state, sets, params, stimulus)
    ang = angles_between_rows(state.headings, forces.desired)
    turn = np.minimum(ang, params.max_turn)
    headings = rotate_rows_toward(state.headings, forces.desired, turn)
    if noise is not None:
        chi, eps = noise.draw(state.n)
        headings = rotate_rows_toward(headings, chi, eps)
    positions = state.positions + params.step_length * state.headings
    return SchoolState(state.k + 1, positions, headings)


def mass_center(state: SchoolState) -> np.ndarray:
    return state.positions.mean(axis=0)


def mean_heading(state: SchoolState) -> np.ndarray:
    return state.headings.mean(axis=0)


def polarization(state: SchoolState) -> float:
    """Norm of the mean heading; 1 at perfect alignment."""
    return float(np.linalg.norm(mean_heading(state)))
