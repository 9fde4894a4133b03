"""Random products of maps and their skew products.

Fiber maps depend on coordinate 0 of the realization only.  A
:class:`FiberFamily` rule is vectorized: ``rule(s, x)`` maps alphabet indices
``s`` (an int or an int array) and points ``x`` to points, broadcasting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from .base import BaseSystem, SymbolPath, as_fraction, shift
from .errors import DomainError, InvalidBaseError, InvalidInputError
from .space import MetricSpace, _dist, epsilon_net

Rule = Callable[[Any, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FiberFamily:
    """The maps ``f_s: X -> X`` indexed by alphabet positions.

    ``interval_monotone`` promises every ``f_s`` is a monotone self-map of
    ``[0, 1]``, so images of ``[0, 1]`` under compositions are the intervals
    spanned by the images of 0 and 1.
    """

    space: MetricSpace
    alphabet: tuple
    rule: Rule
    interval_monotone: bool = False
    lipschitz: tuple | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.interval_monotone and self.space.kind != "unit-interval":
            raise InvalidInputError("interval-monotone flag needs the unit interval")
        if self.lipschitz is not None and len(self.lipschitz) != len(self.alphabet):
            raise InvalidInputError("one Lipschitz bound per symbol")

    def __call__(self, s, x):
        return self.rule(s, x)

    @property
    def max_lipschitz(self) -> float:
        return math.inf if self.lipschitz is None else float(max(self.lipschitz))

    def validate(self, n: int = 1000, seed: int = 0, tol: float = 1e-10) -> None:
        """Spot-check closure and declared Lipschitz bounds on random points."""
        rng = np.random.default_rng(seed)
        x, y = _random_points(self.space, n, rng), _random_points(self.space, n, rng)
        for s in range(len(self.alphabet)):
            fx, fy = self.rule(s, x), self.rule(s, y)
            try:
                self.space.check(fx)
                self.space.check(self.rule(s, epsilon_net(self.space, 1e-2)))
            except DomainError:
                raise InvalidInputError(f"{self.name}: map {s} leaves the space") from None
            if self.lipschitz is not None:
                excess = _dist(self.space, fx, fy) - self.lipschitz[s] * _dist(self.space, x, y)
                if excess.max() > tol:
                    raise InvalidInputError(f"{self.name}: map {s} exceeds its Lipschitz bound")


def _random_points(space: MetricSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    if space.is_finite:
        return np.asarray(space.points)[rng.integers(0, len(space.points), n)]
    return rng.random(n)


@dataclass(frozen=True, eq=False)
class RandomProduct:
    """A base system driving a fiber family: ``phi(n, omega, x)``."""

    base: BaseSystem
    fibers: FiberFamily

    def __post_init__(self):
        if tuple(self.base.alphabet) != tuple(self.fibers.alphabet):
            raise InvalidInputError("base alphabet differs from the fiber family's symbols")

    @property
    def space(self) -> MetricSpace:
        return self.fibers.space

    @property
    def name(self) -> str:
        return self.fibers.name


# -- fiber families -------------------------------------------------------------


def affine_family(a, b, alphabet=None, name="affine-ifs") -> FiberFamily:
    """``f_s(x) = a_s x + b_s`` on ``[0, 1]``; parameters must keep ``[0, 1]`` invariant."""
    a_arr = np.array([float(as_fraction(v)) for v in a])
    b_arr = np.array([float(as_fraction(v)) for v in b])
    if a_arr.shape != b_arr.shape or a_arr.size == 0:
        raise InvalidInputError("a and b need one entry per symbol")
    ends = np.stack([b_arr, a_arr + b_arr])
    if np.any(ends < 0) or np.any(ends > 1):
        raise InvalidInputError("affine maps must send [0, 1] into itself")

    def rule(s, x):
        return a_arr[s] * x + b_arr[s]

    alphabet = tuple(range(a_arr.size)) if alphabet is None else tuple(alphabet)
    return FiberFamily(MetricSpace.unit_interval(), alphabet, rule, interval_monotone=True,
                       lipschitz=tuple(np.abs(a_arr).tolist()), name=name,
                       params={"a": [str(v) for v in a], "b": [str(v) for v in b]})


def rotation_family(alphas, alphabet=None, name="circle-rotations") -> FiberFamily:
    """Isometric circle rotations ``x -> x + alpha_s mod 1``."""
    al = np.array([float(as_fraction(v)) for v in alphas]) % 1.0

    def rule(s, x):
        return (x + al[s]) % 1.0

    alphabet = tuple(range(al.size)) if alphabet is None else tuple(alphabet)
    return FiberFamily(MetricSpace.circle(), alphabet, rule, lipschitz=(1.0,) * al.size,
                       name=name, params={"alphas": [str(v) for v in alphas]})


def table_family(space: MetricSpace, alphabet, table, name="finite-table") -> FiberFamily:
    """Finite maps from ``table[(symbol, x)] = y``; every pair must be present."""
    if not space.is_finite:
        raise InvalidInputError("table families need a finite space")
    alphabet = tuple(alphabet)
    m = len(space.points)
    arr = np.empty((len(alphabet), m), dtype=np.int64)
    for i, s in enumerate(alphabet):
        for j, x in enumerate(space.points):
            if (s, x) not in table:
                raise InvalidInputError(f"table misses f({s!r}, {x!r})")
            arr[i, j] = space.positions(np.array([table[(s, x)]]))[0]
    labels = np.asarray(space.points)

    def rule(s, x):
        return labels[arr[s, space.positions(x)]]

    lip = tuple(float(space.diameter_bound / space.matrix[~np.eye(m, dtype=bool)].min())
                if m > 1 else 0.0 for _ in alphabet)
    return FiberFamily(space, alphabet, rule, lipschitz=lip, name=name,
                       params={"table": [[s, x, table[(s, x)]] for s in alphabet for x in space.points]})


# -- presets ----------------------------------------------------------------------

SWAP_BASE = {1: 2, 2: 1}
SWAP_IDENTITY_TABLE = {(1, 1): 2, (2, 2): 2, (1, 2): 1, (2, 1): 1}


def _weights_or_uniform(params, k):
    w = params.get("weights")
    return [Fraction(1, k)] * k if w is None else [as_fraction(v) for v in w]


def _default_finite_base(params):
    if "base_perm" in params:
        return BaseSystem.permutation({int(k): v for k, v in params["base_perm"].items()})
    return BaseSystem.permutation(SWAP_BASE)


def halving_ifs(base: BaseSystem | None = None) -> RandomProduct:
    """``f_s(x) = (x + s) / 2`` on ``[0, 1]`` over a fair two-sided coin."""
    base = base or BaseSystem.bernoulli([Fraction(1, 2), Fraction(1, 2)], (0, 1))
    fam = affine_family([Fraction(1, 2)] * 2, [0, Fraction(1, 2)], base.alphabet, name="halving-ifs")
    return RandomProduct(base, fam)


def swap_identity_system() -> RandomProduct:
    """Two swapped base states; ``f_1`` swaps X = {1, 2}, ``f_2`` is the identity."""
    base = BaseSystem.permutation(SWAP_BASE)
    fam = table_family(MetricSpace.finite((1, 2)), base.alphabet, SWAP_IDENTITY_TABLE, name="example-2-1")
    return RandomProduct(base, fam)


def _make_halving(params, base):
    return halving_ifs(base or (BaseSystem.bernoulli(params["weights"], (0, 1))
                                if "weights" in params else None))


def _make_affine(params, base):
    a, b = params.get("a"), params.get("b")
    if a is None or b is None:
        raise InvalidInputError("affine-ifs needs parameters a and b")
    base = base or BaseSystem.bernoulli(_weights_or_uniform(params, len(a)))
    return RandomProduct(base, affine_family(a, b, base.alphabet))


def _make_rotations(params, base):
    alphas = params.get("alphas", ["0", repr(math.sqrt(2) - 1)])
    base = base or BaseSystem.bernoulli(_weights_or_uniform(params, len(alphas)))
    return RandomProduct(base, rotation_family(alphas, base.alphabet))


def _finite_space(params):
    return MetricSpace.finite(tuple(params.get("points", (1, 2))), params.get("matrix"))


def _make_table(params, base):
    space = _finite_space(params)
    base = base or _default_finite_base(params)
    try:
        table = {(s, x): y for s, x, y in params["table"]}
    except (KeyError, TypeError, ValueError):
        raise InvalidInputError("finite-table needs table entries [symbol, x, f(symbol, x)]") from None
    return RandomProduct(base, table_family(space, base.alphabet, table))


def _make_identity(params, base):
    space = _finite_space(params)
    base = base or _default_finite_base(params)
    table = {(s, x): x for s in base.alphabet for x in space.points}
    return RandomProduct(base, table_family(space, base.alphabet, table, name="finite-identity"))


def _make_constant(params, base):
    space = _finite_space(params)
    base = base or _default_finite_base(params)
    values = params.get("values")
    if values is None:
        values = [params.get("value", space.points[0])] * base.size
    if len(values) != base.size:
        raise InvalidInputError("finite-constant needs one value per symbol")
    table = {(s, x): c for s, c in zip(base.alphabet, values) for x in space.points}
    return RandomProduct(base, table_family(space, base.alphabet, table, name="finite-constant"))


def _make_example(params, base):
    if base is not None:
        raise InvalidInputError("example-2-1 fixes its own base")
    return swap_identity_system()


@dataclass(frozen=True)
class Preset:
    name: str
    factory: Callable[[dict, BaseSystem | None], RandomProduct]
    schema: dict
    summary: str


PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("affine-ifs", _make_affine,
           {"a": "list of rationals", "b": "list of rationals", "weights": "optional list of rationals"},
           "f_s(x) = a_s x + b_s on [0,1]; closure validated"),
    Preset("circle-rotations", _make_rotations,
           {"alphas": "list of rotation angles", "weights": "optional list of rationals"},
           "f_s(x) = x + alpha_s mod 1; isometric, never synchronizes"),
    Preset("example-2-1", _make_example, {},
           "theta swaps {1,2}; f_1 swaps X={1,2}, f_2 = id; unique invariant measure, no sync"),
    Preset("finite-constant", _make_constant,
           {"points": "list of labels", "value": "label", "values": "optional label per symbol",
            "base_perm": "optional {state: theta(state)}"},
           "constant maps on a finite set"),
    Preset("finite-identity", _make_identity,
           {"points": "list of labels", "base_perm": "optional {state: theta(state)}"},
           "identity maps on a finite set; many invariant measures"),
    Preset("finite-table", _make_table,
           {"points": "list of labels", "table": "list of [symbol, x, f(symbol, x)]",
            "matrix": "optional distance matrix", "base_perm": "optional {state: theta(state)}"},
           "user-defined finite system"),
    Preset("halving-ifs", _make_halving, {"weights": "optional [p0, p1]"},
           "f_s(x) = (x + s)/2 on [0,1]; contracting, synchronizing"),
]}


def make_preset(name: str, params: dict | None = None, base: BaseSystem | None = None) -> RandomProduct:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown preset {name!r}") from None
    return preset.factory(dict(params or {}), base)


# -- operations --------------------------------------------------------------------


def _as_output(x_in, arr):
    return arr.item() if np.ndim(x_in) == 0 else arr


def _points(rp: RandomProduct, x) -> np.ndarray:
    return rp.space.check(x)


def apply_fiber(rp: RandomProduct, path: SymbolPath, x):
    """``f_omega(x)`` using coordinate 0 of ``path``."""
    s = int(path.coords(np.array([0]))[0])
    return _as_output(x, rp.fibers(s, _points(rp, x)))


def iterate(rp: RandomProduct, n: int, path: SymbolPath, x):
    """``phi(n, omega, x) = f_{theta^{n-1} omega} o ... o f_omega(x)``."""
    if n < 0:
        raise DomainError("n must be >= 0")
    y = _points(rp, x)
    for s in path.indices(0, n).tolist():
        y = rp.fibers(s, y)
    return _as_output(x, y)


def orbit(rp: RandomProduct, path: SymbolPath, x, n: int) -> np.ndarray:
    """Array of ``phi(i, omega, x)`` for ``i = 0, ..., n - 1`` (leading axis ``i``)."""
    y = _points(rp, x)
    out = np.empty((n,) + y.shape, dtype=y.dtype)
    if n == 0:
        return out
    out[0] = y
    f = rp.fibers.rule
    for i, s in enumerate(path.indices(0, n - 1).tolist(), start=1):
        y = f(s, y)
        out[i] = y
    return out


def skew_step(rp: RandomProduct, path: SymbolPath, x):
    """``F_phi(omega, x) = (theta omega, f_omega(x))``."""
    return shift(path, 1), apply_fiber(rp, path, x)


def _require_invertible(path: SymbolPath):
    if not path.base.invertible:
        raise InvalidBaseError("pullback needs an invertible (two-sided) base")


def pullback_compose(rp: RandomProduct, path: SymbolPath, n: int, p):
    """``f_{theta^-1 omega} o ... o f_{theta^-n omega}(p)``; reads coordinates ``-n .. -1``."""
    _require_invertible(path)
    if n < 0:
        raise DomainError("depth must be >= 0")
    y = _points(rp, p)
    for s in path.indices(-n, 0).tolist():  # innermost map first
        y = rp.fibers(s, y)
    return _as_output(p, y)


def pullback_all_depths(rp: RandomProduct, path: SymbolPath, n_max: int, seeds) -> np.ndarray:
    """Row ``n - 1`` holds the depth-``n`` pullbacks of ``seeds`` for ``n = 1..n_max``.

    Each row is computed by the same sequence of operations as
    :func:`pullback_compose`, so results agree bit for bit.
    """
    _require_invertible(path)
    seeds = _points(rp, np.atleast_1d(seeds))
    out = np.broadcast_to(seeds, (n_max,) + seeds.shape).copy()
    syms = path.indices(-n_max, 0)  # syms[j] is coordinate j - n_max
    f = rp.fibers.rule
    for k in range(n_max, 0, -1):
        out[k - 1:] = f(int(syms[n_max - k]), out[k - 1:])
    return out


def reversed_forward_compose(rp: RandomProduct, path: SymbolPath, n: int, p):
    """``f_omega o f_{sigma omega} o ... o f_{sigma^n omega}(p)``; reads coordinates ``0 .. n``."""
    if n < 0:
        raise DomainError("n must be >= 0")
    y = _points(rp, p)
    for s in path.indices(0, n + 1)[::-1].tolist():
        y = rp.fibers(s, y)
    return _as_output(p, y)


def default_seeds(rp: RandomProduct, eps: float = 1e-3) -> np.ndarray:
    """Seed points standing in for X: exact endpoints for monotone interval families."""
    if rp.fibers.interval_monotone:
        return np.array([0.0, 1.0])
    return epsilon_net(rp.space, eps)


def image_points(rp: RandomProduct, path: SymbolPath, n: int, seed_points,
                 direction: str = "forward") -> np.ndarray:
    """Images of ``seed_points`` under ``phi(n, omega, .)`` or the depth-``n`` pullback."""
    pts = np.atleast_1d(np.asarray(seed_points))
    if pts.size == 0:
        raise DomainError("seed_points must be nonempty")
    if direction == "forward":
        return iterate(rp, n, path, pts)
    if direction == "pullback":
        return pullback_compose(rp, path, n, pts)
    raise DomainError(f"unknown direction {direction!r}")


def positive_symbols(rp: RandomProduct) -> list[int]:
    return [i for i, w in enumerate(rp.base.weights) if w > 0]


def has_common_fixed_point(rp: RandomProduct, eps: float = 1e-3) -> bool:
    """Scan an eps-net for a point fixed (up to net slack) by every positive-weight map.

    Exact on finite spaces.  On continuous spaces a common fixed point ``x*``
    has a net point ``x`` within ``eps`` with ``d(f_s x, x) <= (1 + K) eps``.
    """
    net = epsilon_net(rp.space, eps)
    syms = positive_symbols(rp)
    disp = np.max([_dist(rp.space, rp.fibers(s, net), net) for s in syms], axis=0)
    if rp.space.is_finite:
        return bool(np.any(disp == 0))
    k = rp.fibers.max_lipschitz
    slack = (1.0 + (k if math.isfinite(k) else 1.0)) * eps
    return bool(np.any(disp <= slack))
