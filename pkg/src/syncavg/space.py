"""Compact metric spaces: unit interval, circle of circumference 1, finite sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidInputError

SPACE_KINDS = ("unit-interval", "circle", "finite-discrete")


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """A compact metric space ``(X, d)``.

    Circle points live in the chart ``[0, 1)``.  Finite points are labels;
    ``matrix`` holds their distances (0/1 discrete metric by default).
    """

    kind: str
    points: tuple | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)
    _sorted: np.ndarray | None = field(default=None, init=False, repr=False)
    _order: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in SPACE_KINDS:
            raise InvalidInputError(f"unknown space kind {self.kind!r}")
        if self.kind != "finite-discrete":
            return
        if not self.points or len(set(self.points)) != len(self.points):
            raise InvalidInputError("finite space needs distinct point labels")
        m = len(self.points)
        if self.matrix is None:
            mat = 1.0 - np.eye(m)
        else:
            mat = np.array(self.matrix, dtype=float)
            if mat.shape != (m, m):
                raise InvalidInputError("distance matrix shape differs from point count")
            if not np.allclose(mat, mat.T, atol=0) or np.any(np.diag(mat) != 0) or np.any(mat < 0):
                raise InvalidInputError("distance matrix must be symmetric, >= 0, with zero diagonal")
            off = ~np.eye(m, dtype=bool)
            if np.any(mat[off] == 0):
                raise InvalidInputError("distinct finite points must be at positive distance")
            tri = mat[:, :, None] + mat[None, :, :] - mat[:, None, :]
            if np.any(tri < -1e-12):
                raise InvalidInputError("distance matrix violates the triangle inequality")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        labels = np.asarray(self.points)
        order = np.argsort(labels, kind="stable")
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_sorted", labels[order])

    @classmethod
    def unit_interval(cls):
        return cls("unit-interval")

    @classmethod
    def circle(cls):
        return cls("circle")

    @classmethod
    def finite(cls, points, matrix=None):
        return cls("finite-discrete", tuple(points), matrix)

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite-discrete"

    @property
    def diameter_bound(self) -> float:
        """``L = sup d(x, y)``."""
        if self.kind == "unit-interval":
            return 1.0
        if self.kind == "circle":
            return 0.5
        return float(self.matrix.max()) if len(self.points) > 1 else 0.0

    def positions(self, x) -> np.ndarray:
        """Row indices into ``matrix`` for finite-space labels."""
        x = np.asarray(x)
        pos = np.clip(np.searchsorted(self._sorted, x), 0, len(self.points) - 1)
        if np.any(self._sorted[pos] != x):
            raise DomainError(f"point not in finite space {self.points}")
        return self._order[pos]

    def labels(self, pos) -> np.ndarray:
        return np.asarray(self.points)[pos]

    def check(self, x) -> np.ndarray:
        """Return ``x`` as an array after verifying membership."""
        if self.kind == "finite-discrete":
            self.positions(x)
            return np.asarray(x)
        x = np.asarray(x, dtype=float)
        if self.kind == "unit-interval":
            if np.any(~(x >= 0.0) | ~(x <= 1.0)):
                raise DomainError("point outside [0, 1]")
        elif np.any(~(x >= 0.0) | ~(x < 1.0)):
            raise DomainError("circle point outside the chart [0, 1)")
        return x

    def reference_point(self):
        """Default base point ``p`` for pullbacks."""
        return self.points[0] if self.is_finite else 0.0


def distance(space: MetricSpace, x, y):
    """``d(x, y)``, vectorized over broadcastable arrays; scalars in, float out."""
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    xa, ya = space.check(x), space.check(y)
    out = _dist(space, xa, ya)
    return float(out) if scalar else out


def _dist(space: MetricSpace, x, y):
    """Unchecked distance on arrays already known to lie in ``space``."""
    if space.kind == "unit-interval":
        return np.abs(x - y)
    if space.kind == "circle":
        t = np.abs(x - y)
        return np.minimum(t, 1.0 - t)
    return space.matrix[space.positions(x), space.positions(y)]


def epsilon_net(space: MetricSpace, eps: float) -> np.ndarray:
    """Finite subset within ``eps`` of every point of ``space``.

    Interval and circle nets are uniform grids with spacing at most ``eps``;
    a finite space is its own net.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if space.is_finite:
        return np.asarray(space.points)
    m = max(1, math.ceil(1.0 / eps - 1e-9))
    if space.kind == "unit-interval":
        return np.linspace(0.0, 1.0, m + 1)
    return np.arange(max(m, 2)) / max(m, 2)


def finite_diameter(space: MetricSpace, pts) -> float:
    """Largest pairwise distance in ``pts`` (O(n log n) on interval and circle)."""
    pts = space.check(np.ravel(np.asarray(pts)))
    if pts.size == 0:
        raise DomainError("diameter of an empty point list")
    return _diameter(space, pts)


def _diameter(space: MetricSpace, pts: np.ndarray) -> float:
    if space.kind == "unit-interval":
        return float(pts.max() - pts.min())
    if space.kind == "circle":
        p = np.unique(pts)
        if p.size == 1:
            return 0.0
        # the farthest point from x is the one nearest to its antipode
        anti = (p + 0.5) % 1.0
        j = np.searchsorted(p, anti)
        cand = np.stack([p[j % p.size], p[(j - 1) % p.size]])
        return float(_dist(space, p[None, :], cand).max())
    pos = np.unique(space.positions(pts))
    return float(space.matrix[np.ix_(pos, pos)].max())


def pairwise_distances(space: MetricSpace, pts) -> np.ndarray:
    pts = space.check(np.ravel(np.asarray(pts)))
    return _dist(space, pts[:, None], pts[None, :])
