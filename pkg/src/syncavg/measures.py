"""Atomic measures on X, the D functional, Wasserstein-1, and exact invariant
measures of finite skew products."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO

import numpy as np
from scipy.optimize import linprog

from .base import SymbolPath
from .errors import DomainError, InvalidInputError
from .product import RandomProduct, orbit
from .space import MetricSpace, _dist

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite atomic probability measure ``sum_i w_i delta_{x_i}``."""

    space: MetricSpace
    points: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = self.space.check(np.ravel(np.asarray(self.points)))
        w = np.ravel(np.asarray(self.weights, dtype=float))
        if pts.size == 0 or pts.shape != w.shape:
            raise InvalidInputError("need one positive weight per atom")
        if np.any(~(w > 0)):
            raise InvalidInputError("atom weights must be positive")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise InvalidInputError(f"total mass {w.sum()!r} differs from 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, space: MetricSpace, pts) -> "EmpiricalMeasure":
        pts = np.ravel(np.asarray(pts))
        return cls(space, pts, np.full(pts.size, 1.0 / pts.size))

    @classmethod
    def dirac(cls, space: MetricSpace, p) -> "EmpiricalMeasure":
        return cls(space, np.array([p]), np.array([1.0]))

    @classmethod
    def lebesgue(cls, n: int = 10_000, space: MetricSpace | None = None) -> "EmpiricalMeasure":
        """Quantile discretization of Lebesgue measure: atoms at ``(i + 1/2) / n``."""
        space = space or MetricSpace.unit_interval()
        if space.is_finite:
            raise InvalidInputError("Lebesgue measure needs the interval or circle")
        return cls.uniform(space, (np.arange(n) + 0.5) / n)

    def merged(self) -> "EmpiricalMeasure":
        """Same measure with coincident atoms combined, atoms sorted."""
        pts, inv = np.unique(self.points, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=self.weights)
        return EmpiricalMeasure(self.space, pts, w)

    @property
    def support_size(self) -> int:
        return int(np.unique(self.points).size)

    def to_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["point", "weight"])
        for p, w in zip(self.points.tolist(), self.weights.tolist()):
            writer.writerow([format(p, ".17g") if isinstance(p, float) else p, format(w, ".17g")])


def empirical_x_marginal(rp: RandomProduct, path: SymbolPath, x, n: int) -> EmpiricalMeasure:
    """Uniform atoms on the orbit ``phi(i, omega, x)``, ``0 <= i < n``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return EmpiricalMeasure.uniform(rp.space, orbit(rp, path, x, n))


def d_functional(m: EmpiricalMeasure) -> float:
    """``D(m) = sum_i sum_j w_i w_j d(x_i, x_j)``.

    Evaluated in O(n log n) on the interval and circle by sorting and prefix
    sums; the value is the same double sum regrouped.
    """
    m = m.merged()
    x, w = m.points, m.weights
    if m.space.is_finite:
        pos = m.space.positions(x)
        return float(w @ m.space.matrix[np.ix_(pos, pos)] @ w)
    cw = np.cumsum(w) - w  # mass strictly before i
    cwx = np.cumsum(w * x) - w * x
    if m.space.kind == "unit-interval":
        return float(2.0 * np.sum(w * (x * cw - cwx)))
    # circle: partners j > i with x_j - x_i <= 1/2 are at distance x_j - x_i,
    # farther ones at 1 - (x_j - x_i)
    tw, twx = np.cumsum(w), np.cumsum(w * x)
    r = np.searchsorted(x, x + 0.5, side="right") - 1
    near_w = tw[r] - tw
    near_wx = twx[r] - twx
    far_w = tw[-1] - tw[r]
    far_wx = twx[-1] - twx[r]
    contrib = (near_wx - x * near_w) + (far_w * (1.0 + x) - far_wx)
    return float(2.0 * np.sum(w * contrib))


def d_functional_bruteforce(m: EmpiricalMeasure) -> float:
    """Literal double sum; O(n^2), used as an oracle for small measures."""
    d = _dist(m.space, m.points[:, None], m.points[None, :])
    return float(m.weights @ d @ m.weights)


def _same_space(a: MetricSpace, b: MetricSpace) -> bool:
    if a is b:
        return True
    if a.kind != b.kind:
        return False
    if not a.is_finite:
        return True
    return a.points == b.points and np.array_equal(a.matrix, b.matrix)


def wasserstein1(space: MetricSpace, m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    """Exact Wasserstein-1 distance between two atomic measures on ``space``."""
    if not (_same_space(space, m1.space) and _same_space(space, m2.space)):
        raise DomainError("measures live on different spaces")
    if space.kind == "finite-discrete":
        return _w1_finite(space, m1, m2)
    pts = np.concatenate([m1.points, m2.points])
    signed = np.concatenate([m1.weights, -m2.weights])
    order = np.argsort(pts, kind="stable")
    pts, signed = pts[order], signed[order]
    diff = np.cumsum(signed)  # F1 - F2 just right of pts[k]
    if space.kind == "unit-interval":
        return float(np.sum(np.abs(diff[:-1]) * np.diff(pts)))
    # circle: W1 = min_c int_0^1 |F1 - F2 - c| dt, minimized at a weighted median
    lengths = np.diff(np.concatenate([pts, [pts[0] + 1.0]]))
    keep = lengths > 0
    vals, lens = diff[keep], lengths[keep]
    o = np.argsort(vals, kind="stable")
    cum = np.cumsum(lens[o])
    c = vals[o][np.searchsorted(cum, 0.5 * cum[-1])]
    return float(np.sum(lens * np.abs(vals - c)))


def _w1_finite(space: MetricSpace, m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    k = len(space.points)
    a = np.bincount(space.positions(m1.points), weights=m1.weights, minlength=k)
    b = np.bincount(space.positions(m2.points), weights=m2.weights, minlength=k)
    rows = np.kron(np.eye(k), np.ones(k))
    cols = np.kron(np.ones(k), np.eye(k))
    res = linprog(space.matrix.ravel(), A_eq=np.vstack([rows, cols]), b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    if not res.success:  # pragma: no cover - balanced transport is always feasible
        raise RuntimeError(res.message)
    return max(0.0, float(res.fun))


def wasserstein1_lp(space: MetricSpace, m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    """Transport LP over the atoms; independent oracle for :func:`wasserstein1`."""
    c = _dist(space, m1.points[:, None], m2.points[None, :])
    p, q = m1.points.size, m2.points.size
    rows = np.kron(np.eye(p), np.ones(q))
    cols = np.kron(np.ones(p), np.eye(q))
    res = linprog(c.ravel(), A_eq=np.vstack([rows, cols]),
                  b_eq=np.concatenate([m1.weights, m2.weights]), bounds=(0, None), method="highs")
    return float(res.fun)


# -- finite systems ---------------------------------------------------------------


@dataclass
class FiniteInvariantMeasureSet:
    """Extreme points of the phi-invariant measures of a finite skew product.

    ``states`` lists ``(omega, x)`` labels; each entry of ``measures`` is an
    exact probability vector over ``states``.  The full set of phi-invariant
    measures is the convex hull, of affine dimension ``dimension``.
    """

    states: list
    measures: list
    atomic_disintegration: list
    marginal_ok: list
    invariant: list
    dimension: int

    @property
    def unique(self) -> bool:
        return len(self.measures) == 1

    def as_dict(self, i: int = 0) -> dict:
        return {s: w for s, w in zip(self.states, self.measures[i]) if w}


def skew_table(rp: RandomProduct) -> tuple[list, list[int]]:
    """States ``(omega, x)`` and the finite skew map as an index table."""
    base, space = rp.base, rp.space
    if base.kind != "finite-permutation" or not space.is_finite:
        raise InvalidInputError("needs a finite-permutation base and a finite space")
    m = len(space.points)
    states = [(w, x) for w in base.alphabet for x in space.points]
    nxt = []
    for i in range(base.size):
        img = space.positions(rp.fibers(i, np.asarray(space.points)))
        nxt.extend(base.perm[i] * m + int(j) for j in img)
    return states, nxt


def _periodic_cycles(nxt: list[int]) -> list[list[int]]:
    color = [0] * len(nxt)  # 0 new, 1 on current walk, 2 done
    cycles = []
    for start in range(len(nxt)):
        walk, v = [], start
        while color[v] == 0:
            color[v] = 1
            walk.append(v)
            v = nxt[v]
        if color[v] == 1:
            cycles.append(walk[walk.index(v):])
        for u in walk:
            color[u] = 2
    return cycles


def finite_invariant_measures(rp: RandomProduct, max_measures: int = 10_000) -> FiniteInvariantMeasureSet:
    """All extreme phi-invariant measures of a finite system, in exact arithmetic.

    Invariant measures of a finite map are mixtures of uniform measures on its
    periodic cycles.  Each cycle projects onto one base cycle and covers it
    uniformly, so the Omega-marginal constraint fixes the total mass on each
    base cycle; extreme points pick one skew cycle per base cycle.
    """
    base = rp.base
    states, nxt = skew_table(rp)
    m = len(rp.space.points)
    cycles = _periodic_cycles(nxt)

    base_cycle_of = {}
    for i in range(base.size):
        if i not in base_cycle_of:
            j, members = i, []
            while j not in base_cycle_of:
                base_cycle_of[j] = i
                members.append(j)
                j = base.perm[j]
    groups: dict[int, list[list[int]]] = {}
    for c in cycles:
        groups.setdefault(base_cycle_of[c[0] // m], []).append(c)
    mass = {}
    for i, b in base_cycle_of.items():
        mass[b] = mass.get(b, Fraction(0)) + base.weights[i]
    charged = sorted(b for b in groups if mass[b] > 0)

    n_ext = 1
    for b in charged:
        n_ext *= len(groups[b])
    if n_ext > max_measures:
        raise InvalidInputError(f"{n_ext} extreme invariant measures exceed max_measures")

    measures = []
    for choice in itertools.product(*(groups[b] for b in charged)):
        vec = [Fraction(0)] * len(states)
        for b, cyc in zip(charged, choice):
            share = mass[b] / len(cyc)
            for v in cyc:
                vec[v] += share
        measures.append(tuple(vec))

    atomic, marg, inv = [], [], []
    for vec in measures:
        push = [Fraction(0)] * len(states)
        for v, w in enumerate(vec):
            push[nxt[v]] += w
        inv.append(push == list(vec))
        rows = [vec[i * m:(i + 1) * m] for i in range(base.size)]
        marg.append(all(sum(r) == base.weights[i] for i, r in enumerate(rows)))
        atomic.append(all(sum(1 for w in r if w) == 1
                          for i, r in enumerate(rows) if base.weights[i] > 0))
    dimension = sum(len(groups[b]) - 1 for b in charged)
    return FiniteInvariantMeasureSet(states, measures, atomic, marg, inv, dimension)
