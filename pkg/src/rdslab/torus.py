"""Flat-torus geometry: wrapped points, distances and projective angles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_array(xy):
    """Reduce an array of planar points mod 1 into [0, 1)."""
    xy = np.asarray(xy, dtype=float)
    if not np.all(np.isfinite(xy)):
        raise ValueError("non-finite coordinates cannot be wrapped")
    out = np.mod(xy, 1.0)
    # np.mod can return 1.0 for tiny negative inputs
    out[out >= 1.0] = 0.0
    return out


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x < 1.0 and 0.0 <= self.y < 1.0):
            raise ValueError(f"({self.x}, {self.y}) is not a reduced torus point; use wrap()")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def wrap(p) -> TorusPoint:
    x, y = wrap_array(np.asarray(p, dtype=float).reshape(2))
    return TorusPoint(float(x), float(y))


def _coords(p) -> np.ndarray:
    if isinstance(p, TorusPoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def delta(p, q):
    """Per-axis wrapped displacement magnitudes min(|d|, 1-|d|)."""
    d = np.abs(_coords(p) - _coords(q)) % 1.0
    return np.minimum(d, 1.0 - d)


def dist(p, q) -> float:
    d = delta(p, q)
    return float(math.hypot(d[0], d[1]))


def dist_array(p, q):
    """Vectorised wrapped distance; p, q broadcast over leading axes, last axis = 2."""
    d = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)) % 1.0
    d = np.minimum(d, 1.0 - d)
    return np.hypot(d[..., 0], d[..., 1])


@dataclass(frozen=True)
class TangentVector:
    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("tangent vector components must be finite")

    def norm(self) -> float:
        return math.hypot(self.u, self.v)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])


class ProjectiveDirection:
    """A line through the origin, stored as a unit vector with canonical sign.

    The canonical representative has its first nonzero component positive,
    so equal lines compare and hash equal.
    """

    __slots__ = ("_vec",)

    def __init__(self, u, v=None):
        vec = np.asarray(u, dtype=float).reshape(2) if v is None else np.array([u, v], dtype=float)
        n = math.hypot(vec[0], vec[1])
        if not math.isfinite(n) or n == 0.0:
            raise ValueError("a projective direction needs a nonzero finite vector")
        vec = vec / n
        if vec[0] < 0.0 or (vec[0] == 0.0 and vec[1] < 0.0):
            vec = -vec
        self._vec = vec

    @classmethod
    def from_angle(cls, theta: float) -> "ProjectiveDirection":
        return cls(math.cos(theta), math.sin(theta))

    @property
    def vector(self) -> np.ndarray:
        return self._vec.copy()

    @property
    def angle(self) -> float:
        """Representative angle in [0, pi)."""
        a = math.atan2(self._vec[1], self._vec[0]) % math.pi
        return 0.0 if a >= math.pi else a

    def __eq__(self, other):
        if not isinstance(other, ProjectiveDirection):
            return NotImplemented
        return proj_angle(self, other) < 1e-12

    def __hash__(self):
        return hash((round(self._vec[0], 10), round(self._vec[1], 10)))

    def __repr__(self):
        return f"ProjectiveDirection({self._vec[0]:.6g}, {self._vec[1]:.6g})"


def _vec(a) -> np.ndarray:
    if isinstance(a, ProjectiveDirection):
        return a.vector
    if isinstance(a, TangentVector):
        return a.as_array()
    return np.asarray(a, dtype=float)


def proj_angle(a, b) -> float:
    """Angle in [0, pi/2] between the lines spanned by a and b."""
    va, vb = _vec(a), _vec(b)
    na, nb = math.hypot(*va), math.hypot(*vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero vector has no direction")
    # atan2 form is accurate near 0 and pi/2, unlike acos
    cross = abs(va[0] * vb[1] - va[1] * vb[0])
    dot = abs(va[0] * vb[0] + va[1] * vb[1])
    return math.atan2(cross, dot)


def proj_angle_array(a, b):
    """Vectorised line angle; last axis holds the 2 components."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    dot = np.abs(a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1])
    return np.arctan2(cross, dot)
