"""Vector kernels for unit-sphere geometry.

Single vectors are float64 arrays of shape (3,); batch variants take (N, 3)
row stacks. Angles are in radians, always in [0, pi]. A vector whose norm is
at or below ``EPS_ZERO`` is treated as zero.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, WeightError, ZeroVectorError

EPS_ZERO = 1e-12

# Transverse component smaller than this fraction of the target norm means the
# rotation plane is numerically undefined and the deterministic axis is used.
_PLANE_EPS = 1e-12


def as_vec3(x) -> np.ndarray:
    """Coerce to a finite float64 vector of shape (3,)."""
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise DimensionMismatchError(f"expected shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ZeroVectorError("vector has non-finite components")
    return v


def normalize(x) -> np.ndarray:
    """Return x / ||x||.

    Raises ZeroVectorError when ||x|| <= EPS_ZERO, since no direction exists.
    """
    v = as_vec3(x)
    n = float(np.linalg.norm(v))
    if n <= EPS_ZERO:
        raise ZeroVectorError("cannot normalize a zero vector")
    return v / n


def angle_between(x, y) -> float:
    """Angle between two vectors in [0, pi]; zero if either vector is zero."""
    a = as_vec3(x)
    b = as_vec3(y)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= EPS_ZERO or nb <= EPS_ZERO:
        return 0.0
    c = float(np.dot(a, b)) / (na * nb)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _fallback_axis_rows(v: np.ndarray) -> np.ndarray:
    """Deterministic unit axes orthogonal to each row of v.

    Crosses v with the canonical basis vector of smallest |component|, so the
    result is well conditioned and reproducible for (anti)parallel targets.
    """
    idx = np.argmin(np.abs(v), axis=1)
    basis = np.zeros_like(v)
    basis[np.arange(v.shape[0]), idx] = 1.0
    w = np.cross(v, basis)
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def rotate_rows_toward(v: np.ndarray, target: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Rotate each unit row of v toward the matching row of target by theta.

    The rotation happens in span(v_i, target_i) and moves by exactly theta_i,
    overshooting the target if theta_i exceeds the separating angle. Rows with
    a zero target or theta_i == 0 are returned bit-identically. Norms of the
    input rows are preserved.
    """
    v = np.asarray(v, dtype=float)
    target = np.asarray(target, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = v.copy()
    tnorm = np.linalg.norm(target, axis=1)
    active = (tnorm > EPS_ZERO) & (theta > 0.0)
    if not np.any(active):
        return out
    va = v[active]
    ta = target[active]
    th = theta[active]
    vnorm = np.linalg.norm(va, axis=1)
    vhat = va / vnorm[:, None]
    proj = np.einsum("ij,ij->i", ta, vhat)
    w = ta - proj[:, None] * vhat
    wnorm = np.linalg.norm(w, axis=1)
    flat = wnorm <= _PLANE_EPS * tnorm[active]
    e2 = np.empty_like(w)
    ok = ~flat
    e2[ok] = w[ok] / wnorm[ok, None]
    if np.any(flat):
        e2[flat] = _fallback_axis_rows(vhat[flat])
    rot = np.cos(th)[:, None] * vhat + np.sin(th)[:, None] * e2
    rot /= np.linalg.norm(rot, axis=1, keepdims=True)
    out[active] = vnorm[:, None] * rot
    return out


def rotate_toward(v, target, theta: float) -> np.ndarray:
    """Rotate v toward target by angle theta (single-vector form).

    v must be nonzero; its norm is preserved. theta == angle(v, target) lands
    exactly on the direction of target; a zero target leaves v unchanged.
    """
    vv = as_vec3(v)
    if float(np.linalg.norm(vv)) <= EPS_ZERO:
        raise ZeroVectorError("cannot rotate a zero vector")
    tt = as_vec3(target)
    if not np.isfinite(theta):
        raise ZeroVectorError("rotation angle must be finite")
    res = rotate_rows_toward(vv[None, :], tt[None, :], np.array([float(theta)]))
    return res[0]


def weighted_sum(vectors: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_i weights[i] * vectors[i] for an (N, 3) stack."""
    m = np.asarray(vectors, dtype=float)
    w = np.asarray(weights, dtype=float)
    if m.ndim != 2 or m.shape[1] != 3:
        raise DimensionMismatchError(f"expected (N, 3) vectors, got {m.shape}")
    if w.shape != (m.shape[0],):
        raise DimensionMismatchError(
            f"weights shape {w.shape} does not match {m.shape[0]} vectors"
        )
    return w @ m


def check_weights(weights, n: int | None = None) -> np.ndarray:
    """Validate a convex-combination weight vector and return it as float64.

    Components must be finite and nonnegative and sum to one within 1e-12.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise WeightError(f"weights must be 1-D, got shape {w.shape}")
    if n is not None and w.shape[0] != n:
        raise DimensionMismatchError(f"expected {n} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)):
        raise WeightError("weights contain non-finite values")
    if np.any(w < 0.0):
        raise WeightError("weights must be nonnegative")
    s = float(w.sum())
    if abs(s - 1.0) > 1e-12:
        raise WeightError(f"weights sum to {s!r}, expected 1")
    return w


def normalization_residual(x, y) -> np.ndarray:
    """Second-order remainder of normalizing a perturbed vector.

    Returns phi(x + y) - (phi(x) + y/||x|| - (y.x/||x||^3) x), where phi is
    normalization. Its norm is bounded by 2 ||y||^2 / ||x||^2.
    """
    xv = as_vec3(x)
    yv = as_vec3(y)
    nx = float(np.linalg.norm(xv))
    if nx <= EPS_ZERO:
        raise ZeroVectorError("base vector is zero")
    s = xv + yv
    ns = float(np.linalg.norm(s))
    if ns <= EPS_ZERO:
        raise ZeroVectorError("perturbed vector is zero")
    linear = xv / nx + yv / nx - (float(np.dot(yv, xv)) / nx**3) * xv
    return s / ns - linear


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Normalize each row; raises ZeroVectorError if any row is zero."""
    m = np.asarray(m, dtype=float)
    n = np.linalg.norm(m, axis=1)
    if np.any(n <= EPS_ZERO):
        raise ZeroVectorError("cannot normalize zero rows")
    return m / n[:, None]


def angles_between_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise angle between two (N, 3) stacks; zero where either row is zero."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    zero_rows = (na <= EPS_ZERO) | (nb <= EPS_ZERO)
    denom = np.where(zero_rows, 1.0, na * nb)
    c = np.einsum("ij,ij->i", a, b) / denom
    ang = np.arccos(np.clip(c, -1.0, 1.0))
    ang[zero_rows] = 0.0
    return ang
