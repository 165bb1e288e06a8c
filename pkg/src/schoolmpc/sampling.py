"""Random geometry: sphere/ball draws and concentrated heading samples.

All samplers take an explicit numpy Generator so runs are reproducible; draws
happen in index order from that single stream.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import SchoolError
from .model import ModelParams, SchoolState, classify_neighbors
from .vec import EPS_ZERO


def uniform_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """n unit vectors uniform on the sphere (normalized Gaussians)."""
    g = rng.standard_normal((n, 3))
    norms = np.linalg.norm(g, axis=1)
    bad = norms <= EPS_ZERO
    if np.any(bad):
        g[bad] = (1.0, 0.0, 0.0)
        norms[bad] = 1.0
    return g / norms[:, None]


def uniform_ball(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """n points uniform in a ball of the given radius centered at the origin."""
    directions = uniform_sphere(rng, n)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return r[:, None] * directions


def _tangent_basis(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = int(np.argmin(np.abs(mu)))
    basis = np.zeros(3)
    basis[idx] = 1.0
    t1 = np.cross(mu, basis)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(mu, t1)
    return t1, t2


def sample_vmf(rng: np.random.Generator, mu, kappa: float, n: int) -> np.ndarray:
    """n unit vectors von Mises-Fisher distributed around mu on the 2-sphere.

    For S^2 the cosine w of the polar angle has an analytically invertible
    CDF: w = 1 + log(u + (1 - u) e^{-2 kappa}) / kappa. kappa == 0 falls back
    to the uniform distribution.
    """
    mu = np.asarray(mu, dtype=float)
    mu = mu / np.linalg.norm(mu)
    if kappa < 1e-8:
        return uniform_sphere(rng, n)
    u = rng.random(n)
    w = 1.0 + np.log(u + (1.0 - u) * math.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    t1, t2 = _tangent_basis(mu)
    s = np.sqrt(np.maximum(0.0, 1.0 - w**2))
    out = (
        w[:, None] * mu[None, :]
        + (s * np.cos(phi))[:, None] * t1[None, :]
        + (s * np.sin(phi))[:, None] * t2[None, :]
    )
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def min_separation_positions(
    rng: np.random.Generator,
    n: int,
    radius: float,
    min_sep: float,
    max_tries: int = 10_000,
) -> np.ndarray:
    """n points uniform in a ball, rejected until pairwise >= min_sep apart."""
    pts = np.empty((n, 3))
    count = 0
    for _ in range(max_tries):
        cand = uniform_ball(rng, 1, radius)[0]
        if count and np.min(np.linalg.norm(pts[:count] - cand, axis=1)) < min_sep:
            continue
        pts[count] = cand
        count += 1
        if count == n:
            return pts
    raise SchoolError(
        f"could not place {n} points with separation {min_sep} in radius {radius}"
    )


def sample_analysis_state(
    rng: np.random.Generator,
    n: int,
    kappa: float,
    params: ModelParams,
    ball_radius: float | None = None,
    min_sep: float | None = None,
    stimulated: bool = False,
    max_attempts: int = 200,
):
    """A random school state satisfying the error-analysis preconditions.

    Positions are separated beyond the repulsion radius inside a ball sized so
    orientation couplings dominate but attraction pairs occur; headings are
    von Mises-Fisher around a random axis. States with an empty orientation
    set, a vanishing orientation force or desired direction, or a vanishing
    mean heading are rejected and resampled. Returns (state, sets, stimulus)
    where stimulus is a random unit vector if stimulated else None.
    """
    if ball_radius is None:
        ball_radius = 0.45 * params.attraction_radius
    if min_sep is None:
        min_sep = 1.2 * params.repulsion_radius
    for _ in range(max_attempts):
        axis = uniform_sphere(rng, 1)[0]
        headings = sample_vmf(rng, axis, kappa, n)
        positions = min_separation_positions(rng, n, ball_radius, min_sep)
        stimulus = uniform_sphere(rng, 1)[0] if stimulated else None
        state = SchoolState(0, positions, headings)
        sets = classify_neighbors(state, params)
        if sets.repulsion.any():
            continue
        deg = sets.orientation_degrees
        if np.any(deg == 0):
            continue
        ori = sets.orientation.astype(float) @ headings
        if np.any(np.linalg.norm(ori, axis=1) <= 1e-9):
            continue
        drive = params.attraction_gain * (
            sets.attraction[:, :, None]
            * _unit_displacements(positions)
        ).sum(axis=1)
        if stimulus is not None:
            drive = drive + params.sensitivity[:, None] * stimulus[None, :]
        if np.any(np.linalg.norm(ori + drive, axis=1) <= 1e-9):
            continue
        if float(np.linalg.norm(headings.mean(axis=0))) < 0.05:
            continue
        return state, sets, stimulus
    raise SchoolError("state sampler failed to find a valid configuration")


def _unit_displacements(positions: np.ndarray) -> np.ndarray:
    diff = positions[None, :, :] - positions[:, None, :]
    dn = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(dn, np.inf)
    return diff / dn[:, :, None]
