"""Synchronization and attractor diagnostics for random products."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Any, Callable, Sequence

import numpy as np

from .base import SymbolPath, counter_uniforms, sample_path, shift, splice_future, truncate_to_future
from .errors import InvalidBaseError, ScenarioPreconditionError
from .measures import skew_table
from .product import (RandomProduct, default_seeds, has_common_fixed_point, orbit,
                      pullback_all_depths, pullback_compose)
from .space import MetricSpace, _diameter, _dist, epsilon_net

CSV_COLUMNS = ("n", "g_n", "h_n", "cesaro_g", "sync_max", "residual")


def _fmt(v) -> str:
    return format(float(v), ".17g")


@dataclass
class Verdict:
    property: str
    threshold: Any
    observed: Any
    passed: bool

    def to_dict(self) -> dict:
        return {"property": self.property, "threshold": _jsonable(self.threshold),
                "observed": _jsonable(self.observed), "pass": bool(self.passed)}


def _jsonable(v):
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class DiagnosticsReport:
    """Per-``n`` rows of diameters, Cesaro averages, sync profile and residuals."""

    n: np.ndarray
    g: np.ndarray
    h: np.ndarray
    cesaro_g: np.ndarray
    sync_max: np.ndarray
    residual: np.ndarray
    metadata: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)

    def to_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(self.n.tolist(), self.g, self.h, self.cesaro_g, self.sync_max, self.residual):
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]])


# -- synchronization averages -------------------------------------------------------


def sync_average(rp: RandomProduct, path: SymbolPath, x, y, n: int) -> float:
    """``(1/n) sum_{i<n} d(phi(i, omega, x), phi(i, omega, y))``."""
    orb = orbit(rp, path, np.array([x, y]), n)
    return float(np.mean(_dist(rp.space, orb[:, 0], orb[:, 1])))


def strong_sync_profiles(rp: RandomProduct, path: SymbolPath, eps: float, n_max: int) -> np.ndarray:
    """Entry ``n - 1`` is the max over eps-net pairs of the length-``n`` sync average.

    For monotone interval families every pair is dominated by the endpoints
    ``(0, 1)``, which are always in the net, so only that pair is tracked.
    """
    net = default_seeds(rp) if rp.fibers.interval_monotone else epsilon_net(rp.space, eps)
    orb = orbit(rp, path, net, n_max)
    counts = np.arange(1, n_max + 1, dtype=float)
    if net.size == 1:
        return np.zeros(n_max)
    iu = np.triu_indices(net.size, k=1)
    acc = np.zeros(iu[0].size)
    out = np.empty(n_max)
    for i in range(n_max):
        acc += _dist(rp.space, orb[i][iu[0]], orb[i][iu[1]])
        out[i] = acc.max()
    return out / counts


def strong_sync_profile(rp: RandomProduct, path: SymbolPath, eps: float, n: int) -> float:
    """Finite surrogate of ``sup_{x,y} (1/n) sum_{i<n} d(f^i x, f^i y)`` over an eps-net."""
    return float(strong_sync_profiles(rp, path, eps, n)[-1])


# -- diameter sequences ------------------------------------------------------------------


def _row_diameters(space: MetricSpace, rows: np.ndarray) -> np.ndarray:
    if space.kind == "unit-interval":
        return rows.max(axis=1) - rows.min(axis=1)
    return np.array([_diameter(space, r) for r in rows])


def forward_diameters(rp: RandomProduct, path: SymbolPath, n_max: int, eps: float = 1e-3) -> np.ndarray:
    """``g_n = diam phi(n, omega, X)`` for ``n = 1..n_max`` on the seed points."""
    orb = orbit(rp, path, default_seeds(rp, eps), n_max + 1)
    return _row_diameters(rp.space, orb[1:])


def pullback_diameters(rp: RandomProduct, path: SymbolPath, n_max: int, eps: float = 1e-3) -> np.ndarray:
    """``h_n = diam f_{theta^-1 omega} o ... o f_{theta^-n omega}(X)`` for ``n = 1..n_max``."""
    return _row_diameters(rp.space, pullback_all_depths(rp, path, n_max, default_seeds(rp, eps)))


def diameter_sequences(rp: RandomProduct, path: SymbolPath, n_max: int, eps: float = 1e-3,
                       sync_eps: float = 0.05, depth: int = 40) -> DiagnosticsReport:
    """Rows ``g_n``, ``h_n``, Cesaro average of ``g``, strong sync profile and the
    one-step invariance residual of the depth-``depth`` pullback graph at step ``n - 1``.

    ``h_n`` and ``residual`` are NaN over a one-sided base.
    """
    n = np.arange(1, n_max + 1)
    g = forward_diameters(rp, path, n_max, eps)
    cesaro = np.cumsum(g) / n
    if path.base.invertible:
        h = pullback_diameters(rp, path, n_max, eps)
        residual = _step_residuals(rp, path, depth, n_max)
    else:
        h = np.full(n_max, np.nan)
        residual = np.full(n_max, np.nan)
    sync = strong_sync_profiles(rp, path, sync_eps, n_max)
    meta = {"system": rp.name, "seed": path.seed, "eps": eps,
            "exact": bool(rp.fibers.interval_monotone or rp.space.is_finite), "n_max": n_max}
    return DiagnosticsReport(n, g, h, cesaro, sync, residual, meta)


# -- invariant graphs -------------------------------------------------------------------


class PullbackGraph:
    """``omega -> f_{theta^-1 omega} o ... o f_{theta^-depth omega}(p)``."""

    def __init__(self, rp: RandomProduct, depth: int, p=None):
        self.rp = rp
        self.depth = depth
        self.p = rp.space.reference_point() if p is None else p

    def __call__(self, path: SymbolPath):
        return pullback_compose(self.rp, path, self.depth, self.p)

    def along(self, path: SymbolPath, n: int) -> np.ndarray:
        """Values at ``theta^i omega`` for ``i < n``; same arithmetic as :meth:`__call__`."""
        if not path.base.invertible:
            raise InvalidBaseError("pullback needs an invertible (two-sided) base")
        y = np.full(n, self.p, dtype=np.asarray(self.p).dtype if self.rp.space.is_finite else float)
        f = self.rp.fibers.rule
        for k in range(self.depth, 0, -1):
            y = f(path.indices(-k, n - k), y)
        return y


class ConstantGraph:
    def __init__(self, value):
        self.value = value

    def __call__(self, path: SymbolPath):
        return self.value

    def along(self, path: SymbolPath, n: int) -> np.ndarray:
        return np.full(n, self.value)


@dataclass
class GraphEstimate:
    value: Any
    depth: int
    cauchy_gap: float
    probe_spread: float
    converged: bool


def estimate_invariant_graph(rp: RandomProduct, path: SymbolPath, tol: float = 1e-6,
                             n_max: int = 4096, probes=None, depth0: int = 1) -> GraphEstimate:
    """Pullback estimate of ``Phi(omega)``, doubling the depth from ``depth0``.

    Stops when ``d(Phi_n(p0), Phi_2n(p0)) < tol`` and the pullbacks of all
    probes lie within ``tol`` of each other, or once the depth exceeds ``n_max``.
    """
    probes = default_seeds(rp, 0.1) if probes is None else np.atleast_1d(np.asarray(probes))
    space = rp.space
    n = max(1, depth0)
    while True:
        imgs = np.atleast_1d(pullback_compose(rp, path, n, probes))
        deeper = pullback_compose(rp, path, 2 * n, probes[:1])
        gap = float(_dist(space, imgs[:1], deeper)[0])
        spread = _diameter(space, imgs)
        converged = gap < tol and spread < tol
        if converged or 2 * n > n_max:
            return GraphEstimate(imgs[0].item(), n, gap, spread, converged)
        n *= 2


def _step_residuals(rp: RandomProduct, path: SymbolPath, depth: int, steps: int) -> np.ndarray:
    graph = PullbackGraph(rp, depth)
    vals = graph.along(path, steps + 1)
    pushed = rp.fibers(path.indices(0, steps), vals[:-1])
    return _dist(rp.space, pushed, vals[1:]).astype(float)


def invariance_residual(rp: RandomProduct, path: SymbolPath, depth: int, steps: int) -> float:
    """``max_{i < steps} d(f_{theta^i omega}(Phi(theta^i omega)), Phi(theta^{i+1} omega))``
    for the depth-``depth`` pullback graph ``Phi``."""
    return float(_step_residuals(rp, path, depth, steps).max()) if steps > 0 else 0.0


def past_dependence_check(rp: RandomProduct, path: SymbolPath, depth: int, fresh_seed: int | None = None,
                          tol: float = 1e-6, probes=None) -> bool:
    """Rewrite every coordinate ``i >= 0`` with fresh symbols and confirm the pullback
    at ``depth`` is bit-identical and the converged graph estimate moves by at most ``tol``."""
    if fresh_seed is None:
        fresh_seed = int(counter_uniforms(path.seed or 0, np.array([depth]), stream=7)[0] * 2**62)
    other = splice_future(path, sample_path(path.base, fresh_seed))
    probes = default_seeds(rp, 0.1) if probes is None else np.atleast_1d(np.asarray(probes))
    same = np.array_equal(pullback_compose(rp, path, depth, probes),
                          pullback_compose(rp, other, depth, probes))
    e1 = estimate_invariant_graph(rp, path, tol, n_max=max(depth, 1), probes=probes)
    e2 = estimate_invariant_graph(rp, other, tol, n_max=max(depth, 1), probes=probes)
    close = float(_dist(rp.space, np.asarray(e1.value), np.asarray(e2.value))) <= tol
    return bool(same and close)


def basin_average_distance(rp: RandomProduct, path: SymbolPath, x, graph: Callable, n: int):
    """``(1/n) sum_{i<n} d(phi(i, omega, x), graph(theta^i omega))``.

    ``x`` may be an array of starting points; the result then has its shape.
    Graphs exposing ``along(path, n)`` are evaluated vectorized.
    """
    orb = orbit(rp, path, x, n)
    if hasattr(graph, "along"):
        target = graph.along(path, n)
    else:
        target = np.array([graph(shift(path, i)) for i in range(n)])
    target = target.reshape((n,) + (1,) * (orb.ndim - 1))
    avg = np.mean(_dist(rp.space, orb, target), axis=0)
    return float(avg) if np.ndim(avg) == 0 else avg


# -- vanishing attractor --------------------------------------------------------------------


def window_codes(path: SymbolPath, k: int, n: int) -> np.ndarray:
    """Integer code of ``(omega_i, ..., omega_{i+k-1})`` for ``i < n``."""
    code = np.zeros(n, dtype=np.int64)
    for j in range(k):
        code = code * path.base.size + path.indices(j, n + j)
    return code


def l1_center(space: MetricSpace, pts: np.ndarray):
    """Point ``c`` minimizing the mean of ``d(x, c)`` over ``pts`` (grid search off the interval)."""
    if space.kind == "unit-interval":
        return float(np.median(pts))
    cand = np.asarray(space.points) if space.is_finite else epsilon_net(space, 1e-2)
    risk = [np.mean(_dist(space, pts, c)) for c in cand]
    return cand[int(np.argmin(risk))].item()


class WindowPredictor:
    """One-sided candidate graph depending on the future window ``omega_0..omega_{k-1}``."""

    def __init__(self, k: int, table: dict, default):
        self.k = k
        self.table = table
        self.default = default

    @classmethod
    def fit(cls, space: MetricSpace, path: SymbolPath, orb: np.ndarray, k: int) -> "WindowPredictor":
        """Windowed conditional L1 center of the orbit points along a training run."""
        codes = window_codes(path, k, orb.shape[0])
        table = {int(c): l1_center(space, orb[codes == c]) for c in np.unique(codes)}
        return cls(k, table, l1_center(space, orb))

    def __call__(self, path: SymbolPath):
        return self.table.get(int(window_codes(path, self.k, 1)[0]), self.default)

    def along(self, path: SymbolPath, n: int) -> np.ndarray:
        codes = window_codes(path, self.k, n)
        return np.array([self.table.get(c, self.default) for c in codes.tolist()])


@dataclass
class VanishingConfig:
    seed: int = 0
    depth: int = 60
    n_two_sided: int = 10_000
    n_one_sided: int = 100_000
    windows: Sequence[int] = (0, 1, 2, 3)
    x0: Any = None
    two_sided_tol: float = 1e-3
    floor: float = 0.24
    bound_tol: float = 0.01
    eps: float = 1e-3


@dataclass
class VanishingReport:
    two_sided_average: float
    window_floors: dict
    independence_bound: float
    verdicts: list


def vanishing_attractor_scenario(rp: RandomProduct, config: VanishingConfig | dict | None = None) -> VanishingReport:
    """Attracting pullback graph for the two-sided system versus the best
    future-window predictors for the system with its past forgotten."""
    cfg = config if isinstance(config, VanishingConfig) else VanishingConfig(**(config or {}))
    if rp.base.kind != "two-sided-bernoulli":
        raise ScenarioPreconditionError(f"needs a two-sided i.i.d. base, got {rp.base.kind!r}")
    if has_common_fixed_point(rp, cfg.eps):
        raise ScenarioPreconditionError("the fiber maps have a common fixed point")
    space = rp.space
    x0 = space.reference_point() if cfg.x0 is None else cfg.x0

    path = sample_path(rp.base, cfg.seed)
    graph = PullbackGraph(rp, cfg.depth)
    two_sided = basin_average_distance(rp, path, x0, graph, cfg.n_two_sided)

    plus = RandomProduct(rp.base.one_sided(), rp.fibers)
    test_path = truncate_to_future(path)
    train_path = truncate_to_future(sample_path(rp.base, cfg.seed + 1_000_003))
    n1 = cfg.n_one_sided
    train_orb = orbit(plus, train_path, x0, n1)
    floors = {}
    for k in cfg.windows:
        pred = WindowPredictor.fit(space, train_path, train_orb, k)
        floors[k] = basin_average_distance(plus, test_path, x0, pred, n1)

    stationary = graph.along(sample_path(rp.base, cfg.seed + 2_000_003), n1)
    c = l1_center(space, stationary)
    bound = float(np.mean(_dist(space, stationary, c)))

    verdicts = [Verdict("two_sided_basin_average", cfg.two_sided_tol, two_sided,
                        two_sided <= cfg.two_sided_tol)]
    verdicts += [Verdict(f"one_sided_floor_k{k}", cfg.floor, v, v >= cfg.floor) for k, v in floors.items()]
    low = min(floors.values())
    verdicts.append(Verdict("floor_vs_independence_bound", bound - cfg.bound_tol, low,
                            low >= bound - cfg.bound_tol))
    return VanishingReport(two_sided, floors, bound, verdicts)


# -- structural properties --------------------------------------------------------------------


@dataclass
class PropertySuiteReport:
    seeds: list
    exact: bool
    pass_counts: dict
    failing_seeds: dict
    max_excess: dict
    verdicts: list


def _net_slack(rp: RandomProduct, eps: float, exact: bool, n: np.ndarray) -> np.ndarray:
    """Upper bound on true-minus-surrogate diameter after ``n`` steps."""
    if exact:
        return np.zeros(np.shape(n))
    k = rp.fibers.max_lipschitz
    return 2.0 * eps * np.power(k, n, dtype=float)


def property_suite(rp: RandomProduct, seeds: Sequence[int], n_max: int, eps: float = 1e-3) -> PropertySuiteReport:
    """Check ``h_{n+1} <= h_n``, ``g_{m+k}(omega) <= g_m(theta^k omega)`` and
    ``u_{m+n}(omega) <= u_m(omega) + u_n(theta^m omega)`` per seed, all ``m + k <= n_max``."""
    exact = bool(rp.fibers.interval_monotone or rp.space.is_finite)
    names = ["h_monotone", "g_shift_subadditive", "u_subadditive"]
    counts = {p: 0 for p in names}
    failing = {p: [] for p in names}
    excess = {p: -math.inf for p in names}
    steps = np.arange(1, n_max + 1)
    slack = _net_slack(rp, eps, exact, steps)
    slack_u = np.concatenate([[0.0], np.cumsum(slack)])
    mm, kk = np.meshgrid(steps, steps, indexing="ij")
    pairs = mm + kk <= n_max
    for seed in seeds:
        path = sample_path(rp.base, seed)
        # gmat[k, j - 1] = g_j(theta^k omega)
        gmat = np.array([forward_diameters(rp, shift(path, k), n_max, eps) for k in range(n_max + 1)])
        results = {}
        if path.base.invertible:
            h = pullback_diameters(rp, path, n_max, eps)
            results["h_monotone"] = np.max(h[1:] - h[:-1] - slack[:-1], initial=-math.inf)
        # g_{m+k}(omega) - g_m(theta^k omega), indices m = mm, k = kk
        lhs = gmat[0][np.where(pairs, mm + kk - 1, 0)]
        rhs = gmat[kk, mm - 1] + slack[mm - 1]
        results["g_shift_subadditive"] = np.max(np.where(pairs, lhs - rhs, -math.inf))
        u = np.concatenate([np.zeros((n_max + 1, 1)), np.cumsum(gmat, axis=1)], axis=1)
        # u_{m+n}(omega) - u_m(omega) - u_n(theta^m omega), here n = kk
        lhs_u = u[0][np.where(pairs, mm + kk, 0)]
        rhs_u = u[0][mm] + u[mm, kk] + slack_u[kk]
        results["u_subadditive"] = np.max(np.where(pairs, lhs_u - rhs_u, -math.inf))
        for p, ex in results.items():
            excess[p] = max(excess[p], float(ex))
            if ex <= 0:
                counts[p] += 1
            else:
                failing[p].append(seed)
    verdicts = [Verdict(p, 0.0 if exact else "2 L eps net slack", excess[p],
                        not failing[p]) for p in names if excess[p] > -math.inf or p != "h_monotone"]
    return PropertySuiteReport(list(seeds), exact, counts, failing, excess, verdicts)


# -- finite systems, exact ------------------------------------------------------------------------


def finite_sync_limit(rp: RandomProduct, state, x, y) -> Fraction:
    """Exact ``lim (1/n) sum_{i<n} d(phi(i, omega, x), phi(i, omega, y))`` for a finite
    system started at base state ``state``: the mean distance over the eventual cycle
    of the finite triple dynamics ``(omega, x, y)``."""
    states, nxt = skew_table(rp)
    space = rp.space
    m = len(space.points)
    w = rp.base.index_of(state)
    px, py = (int(space.positions(np.array([v]))[0]) for v in (x, y))
    seen: dict[tuple, int] = {}
    trail = []
    cur = (w, px, py)
    while cur not in seen:
        seen[cur] = len(trail)
        trail.append(cur)
        w_, a, b = cur
        na, nb = nxt[w_ * m + a], nxt[w_ * m + b]
        cur = (na // m, na % m, nb % m)
    cycle = trail[seen[cur]:]
    total = sum(Fraction(float(space.matrix[a, b])) for _, a, b in cycle)
    return total / len(cycle)


def finite_strong_sync(rp: RandomProduct) -> tuple[bool, Fraction]:
    """Whether every ``(omega, x, y)`` with ``P(omega) > 0`` synchronizes on average;
    also returns the largest Cesaro limit."""
    worst = Fraction(0)
    pts = rp.space.points
    for i, st in enumerate(rp.base.alphabet):
        if rp.base.weights[i] == 0:
            continue
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                worst = max(worst, finite_sync_limit(rp, st, pts[a], pts[b]))
    return worst == 0, worst
