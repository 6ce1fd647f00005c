"""Inspection points on the chief: placement, weighting, visibility and illumination.

Points sit on a sphere around the Hill-frame origin. A point counts as inspected the
first time it is inside the sensor cone, on the near side of the sphere as seen from
the deputy, and on the sunlit hemisphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import _dcm

__all__ = [
    "PointSet",
    "fibonacci_sphere",
    "point_weights",
    "generate_points",
    "visible",
    "illuminated",
    "update_inspected",
]

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def fibonacci_sphere(n: int, radius: float = 1.0) -> np.ndarray:
    """Near-uniform lattice of ``n`` points on a sphere (golden-angle spiral)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n)
    z = 1.0 - 2.0 * (i + 0.5) / n
    rho = np.sqrt(1.0 - z * z)
    phi = i * _GOLDEN_ANGLE
    return radius * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def point_weights(positions, priority_vec) -> np.ndarray:
    """Weights proportional to ``pi - angle(point, priority)``, summing to 1."""
    pos = np.asarray(positions, dtype=float)
    u = pos / np.linalg.norm(pos, axis=1, keepdims=True)
    pr = np.asarray(priority_vec, dtype=float)
    pr = pr / np.linalg.norm(pr)
    # atan2 stays accurate near 0 and pi where arccos loses half the digits
    ang = np.arctan2(np.linalg.norm(np.cross(u, pr), axis=1), u @ pr)
    w = np.pi - ang
    s = w.sum()
    if s <= 0:
        return np.full(len(w), 1.0 / len(w))
    return w / s


def _random_rotation(seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return _dcm(q)


@dataclass
class PointSet:
    """Inspection points with weights and one-way inspected flags."""

    positions: np.ndarray
    weights: np.ndarray
    inspected: np.ndarray
    priority_vec: np.ndarray

    @property
    def inspected_weight(self) -> float:
        return float(self.weights[self.inspected].sum())

    @property
    def n_inspected(self) -> int:
        return int(self.inspected.sum())

    def copy(self) -> "PointSet":
        return PointSet(self.positions.copy(), self.weights.copy(), self.inspected.copy(), self.priority_vec.copy())


def generate_points(n: int = 100, radius: float = 10.0, priority_vec=(1.0, 0.0, 0.0), seed=None) -> PointSet:
    """Fibonacci lattice on a sphere, optionally rotated by a seeded random rotation."""
    pos = fibonacci_sphere(n, radius)
    if seed is not None:
        pos = pos @ _random_rotation(seed).T
        # restore exact radius after rotation round-off
        pos *= radius / np.linalg.norm(pos, axis=1, keepdims=True)
    pr = np.asarray(priority_vec, dtype=float)
    pr = pr / np.linalg.norm(pr)
    return PointSet(pos, point_weights(pos, pr), np.zeros(n, dtype=bool), pr)


# ---------------------------------------------------------------- compiled kernels


@njit(cache=True)
def _visible(pt, dp, R, bore_body, cos_half_fov):
    b0 = R[0, 0] * bore_body[0] + R[0, 1] * bore_body[1] + R[0, 2] * bore_body[2]
    b1 = R[1, 0] * bore_body[0] + R[1, 1] * bore_body[1] + R[1, 2] * bore_body[2]
    b2 = R[2, 0] * bore_body[0] + R[2, 1] * bore_body[1] + R[2, 2] * bore_body[2]
    d0 = pt[0] - dp[0]
    d1 = pt[1] - dp[1]
    d2 = pt[2] - dp[2]
    dn = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    if dn == 0.0:
        return False
    bn = math.sqrt(b0 * b0 + b1 * b1 + b2 * b2)
    cang = (b0 * d0 + b1 * d1 + b2 * d2) / (dn * bn)
    if not cang > cos_half_fov:
        return False
    # near side of the sphere: deputy above the tangent plane at the point
    return -(d0 * pt[0] + d1 * pt[1] + d2 * pt[2]) > 0.0


@njit(cache=True)
def _illuminated(pt, sun):
    return pt[0] * sun[0] + pt[1] * sun[1] + pt[2] * sun[2] > 0.0


@njit(cache=True)
def _update(pos, weights, inspected, dp, q, sun, bore_body, cos_half_fov, new_mask):
    """Mark newly seen points. Returns (weight gained, count); new_mask flags them."""
    R = _dcm(q)
    gained = 0.0
    count = 0
    for i in range(pos.shape[0]):
        new_mask[i] = False
        if inspected[i]:
            continue
        pt = pos[i]
        if _illuminated(pt, sun) and _visible(pt, dp, R, bore_body, cos_half_fov):
            inspected[i] = True
            new_mask[i] = True
            gained += weights[i]
            count += 1
    return gained, count


def _cos_half(fov_deg: float) -> float:
    return math.cos(math.radians(fov_deg) / 2)


def visible(point, deputy_p, q, fov_deg: float = 60.0, boresight_body=(1.0, 0.0, 0.0)) -> bool:
    """Point inside the sensor cone (strict) and on the sphere's near side."""
    return bool(
        _visible(
            np.asarray(point, dtype=float),
            np.asarray(deputy_p, dtype=float),
            _dcm(np.asarray(q, dtype=float)),
            np.asarray(boresight_body, dtype=float),
            _cos_half(fov_deg),
        )
    )


def illuminated(point, r_sun) -> bool:
    """Point on the sunlit hemisphere (strict; the terminator is dark)."""
    return bool(_illuminated(np.asarray(point, dtype=float), np.asarray(r_sun, dtype=float)))


def update_inspected(ps: PointSet, deputy_p, q, r_sun, fov_deg: float = 60.0, boresight_body=(1.0, 0.0, 0.0)):
    """Mark every visible, lit, uninspected point. Returns (new weight, new count)."""
    new = np.zeros(len(ps.weights), dtype=np.bool_)
    g, c = _update(
        ps.positions,
        ps.weights,
        ps.inspected,
        np.asarray(deputy_p, dtype=float),
        np.asarray(q, dtype=float),
        np.asarray(r_sun, dtype=float),
        np.asarray(boresight_body, dtype=float),
        _cos_half(fov_deg),
        new,
    )
    return float(g), int(c)
