"""Measure-preserving base systems and their sampled realizations.

A realization ``omega`` is a :class:`SymbolPath`: a read-only view of a
bi-infinite (or one-sided) symbol sequence whose coordinates are produced on
demand from a counter-based generator keyed by ``(seed, index)``.  Shifting a
path moves its origin and never resamples anything, so pullback compositions
can reach arbitrarily deep into the past reproducibly.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, InvalidBaseError, InvalidInputError, InvalidShiftError

KINDS = ("two-sided-bernoulli", "one-sided-bernoulli", "markov-shift", "finite-permutation")

WEIGHT_TOL = 1e-12
STATIONARY_TOL = 1e-10


def as_fraction(value) -> Fraction:
    """Parse an int, float, Fraction or ``"p/q"`` string exactly."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise InvalidInputError(f"not a number: {value!r}")
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, float):
        # decimal round-trip so that 0.3 means 3/10, not the nearest double
        return Fraction(repr(value))
    raise InvalidInputError(f"not a number: {value!r}")


def _check_probability_vector(weights: Sequence[Fraction], what: str) -> None:
    if any(w < 0 for w in weights):
        raise InvalidInputError(f"{what} must be nonnegative")
    if abs(float(sum(weights)) - 1.0) > WEIGHT_TOL:
        raise InvalidInputError(f"{what} must sum to 1 (got {float(sum(weights))!r})")


def _solve_stationary(matrix: Sequence[Sequence[Fraction]]) -> list[Fraction]:
    """Exact stationary row vector of an irreducible stochastic matrix."""
    k = len(matrix)
    # rows of (M^T - I), last equation replaced by normalization
    a = [[matrix[j][i] - (1 if i == j else 0) for j in range(k)] for i in range(k)]
    a[-1] = [Fraction(1)] * k
    b = [Fraction(0)] * (k - 1) + [Fraction(1)]
    for col in range(k):
        piv = next((r for r in range(col, k) if a[r][col] != 0), None)
        if piv is None:
            raise InvalidInputError("markov matrix has no unique stationary vector")
        a[col], a[piv] = a[piv], a[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(k):
            if r != col and a[r][col] != 0:
                factor = a[r][col] / a[col][col]
                a[r] = [x - factor * y for x, y in zip(a[r], a[col])]
                b[r] -= factor * b[col]
    return [b[i] / a[i][i] for i in range(k)]


@dataclass(frozen=True, eq=False)
class BaseSystem:
    """Descriptor of ``(Omega, F, P, theta)``.

    For Bernoulli kinds ``weights`` is the one-coordinate law.  For
    ``markov-shift`` it is the stationary vector of ``matrix``.  For
    ``finite-permutation`` the alphabet is the state space itself, ``perm[i]``
    is the index of ``theta(alphabet[i])`` and ``weights`` is ``P``.
    """

    kind: str
    alphabet: tuple
    weights: tuple
    matrix: tuple | None = None
    perm: tuple | None = None
    two_sided: bool = True
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown base kind {self.kind!r}")
        if len(set(self.alphabet)) != len(self.alphabet) or not self.alphabet:
            raise InvalidInputError("alphabet must be nonempty with distinct symbols")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.alphabet)})
        k = len(self.alphabet)
        if len(self.weights) != k:
            raise InvalidInputError("weights length differs from alphabet size")
        object.__setattr__(self, "weights", tuple(as_fraction(w) for w in self.weights))
        _check_probability_vector(self.weights, "weights")
        if self.kind == "one-sided-bernoulli":
            object.__setattr__(self, "two_sided", False)
        elif self.kind in ("two-sided-bernoulli", "finite-permutation"):
            object.__setattr__(self, "two_sided", True)
        if self.kind == "markov-shift":
            self._validate_markov()
        if self.kind == "finite-permutation":
            self._validate_permutation()

    def _validate_markov(self):
        k = len(self.alphabet)
        if self.matrix is None or len(self.matrix) != k:
            raise InvalidInputError("markov-shift needs a k x k matrix")
        rows = tuple(tuple(as_fraction(x) for x in row) for row in self.matrix)
        for row in rows:
            if len(row) != k:
                raise InvalidInputError("markov-shift needs a k x k matrix")
            _check_probability_vector(row, "matrix rows")
        object.__setattr__(self, "matrix", rows)
        v = self.weights
        for j in range(k):
            vm = sum(v[i] * rows[i][j] for i in range(k))
            if abs(float(vm - v[j])) > STATIONARY_TOL:
                raise InvalidInputError("weights are not stationary for the matrix (vM != v)")

    def _validate_permutation(self):
        k = len(self.alphabet)
        if self.perm is None or sorted(self.perm) != list(range(k)):
            raise InvalidInputError("finite-permutation needs a permutation of the states")
        for i in range(k):
            if self.weights[self.perm[i]] != self.weights[i]:
                raise InvalidInputError("weights are not invariant under the permutation")

    # -- constructors -------------------------------------------------------

    @classmethod
    def bernoulli(cls, weights, alphabet=None, two_sided=True):
        alphabet = tuple(range(len(weights))) if alphabet is None else tuple(alphabet)
        kind = "two-sided-bernoulli" if two_sided else "one-sided-bernoulli"
        return cls(kind, alphabet, tuple(weights))

    @classmethod
    def markov(cls, matrix, alphabet=None, stationary=None, two_sided=True):
        rows = [[as_fraction(x) for x in row] for row in matrix]
        alphabet = tuple(range(len(rows))) if alphabet is None else tuple(alphabet)
        if stationary is None:
            stationary = _solve_stationary(rows)
        return cls("markov-shift", alphabet, tuple(stationary), matrix=tuple(map(tuple, rows)),
                   two_sided=two_sided)

    @classmethod
    def permutation(cls, mapping: Mapping, weights=None):
        """Finite base from ``{state: theta(state)}``; uniform ``P`` by default."""
        states = tuple(mapping)
        index = {s: i for i, s in enumerate(states)}
        try:
            perm = tuple(index[mapping[s]] for s in states)
        except KeyError as exc:
            raise InvalidInputError(f"permutation maps outside its states: {exc}") from None
        if weights is None:
            weights = [Fraction(1, len(states))] * len(states)
        return cls("finite-permutation", states, tuple(weights), perm=perm)

    # -- queries ------------------------------------------------------------

    @property
    def invertible(self) -> bool:
        return self.two_sided

    @property
    def size(self) -> int:
        return len(self.alphabet)

    def index_of(self, symbol) -> int:
        try:
            return self._index[symbol]
        except (KeyError, TypeError):
            raise DomainError(f"symbol {symbol!r} not in alphabet {self.alphabet}") from None

    def float_weights(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def one_sided(self) -> "BaseSystem":
        """The base with the past forgotten (natural projection onto coordinates >= 0)."""
        if self.kind == "two-sided-bernoulli":
            return BaseSystem("one-sided-bernoulli", self.alphabet, self.weights)
        if self.kind == "markov-shift":
            return BaseSystem("markov-shift", self.alphabet, self.weights, matrix=self.matrix,
                              two_sided=False)
        if self.kind == "one-sided-bernoulli":
            return self
        raise InvalidBaseError("finite-permutation bases have no one-sided counterpart")

    def describe(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "alphabet": list(self.alphabet),
                               "weights": [str(w) for w in self.weights]}
        if self.matrix is not None:
            out["matrix"] = [[str(x) for x in row] for row in self.matrix]
            out["two_sided"] = self.two_sided
        if self.perm is not None:
            out["perm"] = {str(self.alphabet[i]): self.alphabet[j] for i, j in enumerate(self.perm)}
        return out


# -- counter-based generator --------------------------------------------------

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, index: np.ndarray, stream: int = 0) -> np.ndarray:
    """Uniforms on [0, 1) that depend only on ``(seed, stream, index)``."""
    key = _mix64(np.array([(seed * 0x9E3779B97F4A7C15 + stream) & _MASK], dtype=np.uint64))
    idx = np.asarray(index, dtype=np.int64).astype(np.uint64)
    h = _mix64(_mix64(idx * _GOLDEN + key) ^ key)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def _thresholds(probs: Sequence[Fraction]) -> np.ndarray:
    cum = np.cumsum([float(p) for p in probs])
    return cum[:-1]


class _BernoulliSource:
    def __init__(self, base: BaseSystem, seed: int):
        self._cut = _thresholds(base.weights)
        self._seed = seed

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        u = counter_uniforms(self._seed, idx)
        return np.searchsorted(self._cut, u, side="right").astype(np.int64)


class _MarkovSource:
    """Stationary chain anchored at absolute index 0.

    Coordinates >= 0 run the chain forward; coordinates < 0 run the reversed
    chain ``v_j M_ji / v_i``.  Materialized states are cached; the values only
    depend on the seed, never on the order in which they were requested.
    """

    def __init__(self, base: BaseSystem, seed: int):
        k = base.size
        v = base.weights
        m = base.matrix
        self._seed = seed
        self._init = list(_thresholds(v))
        self._fwd_rows = [list(_thresholds(m[i])) for i in range(k)]
        rev = [[(v[j] * m[j][i] / v[i]) if v[i] else Fraction(1 if i == j else 0, 1)
                for j in range(k)] for i in range(k)]
        self._bwd_rows = [list(_thresholds(row)) for row in rev]
        u0 = float(counter_uniforms(seed, np.array([0]))[0])
        self._fwd = [bisect.bisect_right(self._init, u0)]  # coords 0, 1, 2, ...
        self._bwd = []  # coords -1, -2, ...
        self._lock = threading.Lock()

    def _extend(self, states: list, rows, need: int, sign: int):
        start = len(states)
        n_new = need - start
        if n_new <= 0:
            return
        if sign > 0:
            idx = np.arange(start, start + n_new)
            prev = states[-1]
        else:
            idx = -np.arange(start + 1, start + 1 + n_new)
            prev = states[-1] if states else self._fwd[0]
        for u in counter_uniforms(self._seed, idx).tolist():
            prev = bisect.bisect_right(rows[prev], u)
            states.append(prev)

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return np.zeros(idx.shape, dtype=np.int64)
        hi, lo = int(idx.max()), int(idx.min())
        with self._lock:
            self._extend(self._fwd, self._fwd_rows, hi + 1, +1)
            if lo < 0:
                self._extend(self._bwd, self._bwd_rows, -lo, -1)
            fwd = np.asarray(self._fwd, dtype=np.int64)
            bwd = np.asarray(self._bwd, dtype=np.int64)
        out = np.empty(idx.shape, dtype=np.int64)
        pos = idx >= 0
        out[pos] = fwd[idx[pos]]
        out[~pos] = bwd[-idx[~pos] - 1]
        return out


class _PermutationSource:
    """``coordinate i = theta^i(initial state)``, exact for all integers i."""

    def __init__(self, base: BaseSystem, state_index: int):
        cycle = [state_index]
        while (nxt := base.perm[cycle[-1]]) != state_index:
            cycle.append(nxt)
        self._cycle = np.asarray(cycle, dtype=np.int64)

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        return self._cycle[np.asarray(idx, dtype=np.int64) % len(self._cycle)]


class _ExplicitSource:
    def __init__(self, values: Mapping[int, int], fallback):
        keys = np.array(sorted(values), dtype=np.int64)
        self._keys = keys
        self._vals = np.array([values[k] for k in keys.tolist()], dtype=np.int64)
        self._fallback = fallback

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        out = np.array(self._fallback(idx), dtype=np.int64, copy=True)
        if self._keys.size:
            pos = np.clip(np.searchsorted(self._keys, idx), 0, self._keys.size - 1)
            hit = self._keys[pos] == idx
            out[hit] = self._vals[pos[hit]]
        return out


class _ConstantSource:
    def __init__(self, value: int):
        self._value = value

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        return np.full(np.shape(idx), self._value, dtype=np.int64)


class _SplicedSource:
    """Past of one path glued to the future of another at coordinate 0."""

    def __init__(self, past: "SymbolPath", future: "SymbolPath"):
        self._past = past
        self._future = future

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        out = np.empty(idx.shape, dtype=np.int64)
        neg = idx < 0
        if neg.any():
            out[neg] = self._past._source(self._past.origin + idx[neg])
        if (~neg).any():
            out[~neg] = self._future._source(self._future.origin + idx[~neg])
        return out


class SymbolPath:
    """A realization ``omega`` viewed from ``origin``.

    ``path[i]`` is the symbol ``omega_i``.  Coordinates are stored as alphabet
    indices internally; :meth:`indices` exposes them vectorized.
    """

    __slots__ = ("base", "_source", "origin", "seed")

    def __init__(self, base: BaseSystem, source, origin: int = 0, seed: int | None = None):
        self.base = base
        self._source = source
        self.origin = origin
        self.seed = seed

    def _check(self, lo: int):
        if lo < 0 and not self.base.two_sided:
            raise DomainError("negative coordinates do not exist on a one-sided base")

    def coords(self, i) -> np.ndarray:
        """Alphabet indices of the coordinates in the integer array ``i``."""
        i = np.asarray(i, dtype=np.int64)
        if i.size:
            self._check(int(i.min()))
        return self._source(self.origin + i)

    def indices(self, start: int, stop: int) -> np.ndarray:
        """Alphabet indices of coordinates ``start, ..., stop - 1``."""
        if stop <= start:
            return np.zeros(0, dtype=np.int64)
        self._check(start)
        return self._source(np.arange(self.origin + start, self.origin + stop, dtype=np.int64))

    def symbols(self, start: int, stop: int) -> list:
        alpha = self.base.alphabet
        return [alpha[j] for j in self.indices(start, stop).tolist()]

    def __getitem__(self, i: int):
        return self.base.alphabet[int(self.coords(np.array([i]))[0])]

    def shift(self, k: int) -> "SymbolPath":
        return shift(self, k)

    def __repr__(self):
        return f"SymbolPath(kind={self.base.kind!r}, seed={self.seed}, origin={self.origin})"


def shift(path: SymbolPath, k: int) -> SymbolPath:
    """``theta^k(omega)``: coordinate ``i`` of the result is coordinate ``i + k`` of ``path``."""
    k = int(k)
    if k < 0 and not path.base.invertible:
        raise InvalidShiftError(f"shift by {k} on a one-sided base")
    return SymbolPath(path.base, path._source, path.origin + k, path.seed)


def _source_for(base: BaseSystem, seed: int):
    if base.kind in ("two-sided-bernoulli", "one-sided-bernoulli"):
        return _BernoulliSource(base, seed)
    if base.kind == "markov-shift":
        return _MarkovSource(base, seed)
    u = float(counter_uniforms(seed, np.array([0]))[0])
    state = bisect.bisect_right(list(_thresholds(base.weights)), u)
    return _PermutationSource(base, state)


def sample_path(base: BaseSystem, seed: int) -> SymbolPath:
    """Realization distributed according to ``P``; identical seeds give identical paths.

    For a finite-permutation base the initial state is drawn from ``P``.
    """
    return SymbolPath(base, _source_for(base, seed), 0, seed)


def path_at_state(base: BaseSystem, state) -> SymbolPath:
    """Finite-permutation orbit starting at ``state``."""
    if base.kind != "finite-permutation":
        raise InvalidBaseError("path_at_state needs a finite-permutation base")
    return SymbolPath(base, _PermutationSource(base, base.index_of(state)), 0, None)


def path_from_symbols(base: BaseSystem, future: Iterable = (), past: Iterable = (),
                      fill=None, seed: int = 0) -> SymbolPath:
    """Path with prescribed coordinates.

    ``future[i]`` is coordinate ``i`` and ``past[k]`` is coordinate ``-(k+1)``.
    Unspecified coordinates read the constant symbol ``fill`` when given,
    otherwise a sampled realization with ``seed``.
    """
    values = {i: base.index_of(s) for i, s in enumerate(future)}
    past = list(past)
    if past and not base.two_sided:
        raise DomainError("one-sided base has no past coordinates")
    values.update({-(k + 1): base.index_of(s) for k, s in enumerate(past)})
    if fill is not None:
        fallback = _ConstantSource(base.index_of(fill))
    elif base.kind == "finite-permutation":
        fallback = _BernoulliSource(BaseSystem.bernoulli(base.weights, base.alphabet), seed)
    else:
        fallback = _source_for(base, seed)
    return SymbolPath(base, _ExplicitSource(values, fallback), 0, seed)


def splice_future(path: SymbolPath, future: SymbolPath) -> SymbolPath:
    """Keep the coordinates ``< 0`` of ``path`` and read coordinates ``>= 0`` from ``future``."""
    if not path.base.invertible:
        raise InvalidBaseError("splicing needs a two-sided path")
    return SymbolPath(path.base, _SplicedSource(path, future), 0, path.seed)


def truncate_to_future(path: SymbolPath) -> SymbolPath:
    """Natural projection onto coordinates ``i >= 0`` (one-sided input is returned as is)."""
    if not path.base.two_sided:
        return path
    return SymbolPath(path.base.one_sided(), path._source, path.origin, path.seed)


def symbol_frequency(path: SymbolPath, n: int, symbol) -> float:
    """Fraction of ``0 <= i < n`` with ``omega_i == symbol``."""
    if n < 1:
        raise DomainError("n must be >= 1")
    j = path.base.index_of(symbol)
    return float(np.count_nonzero(path.indices(0, n) == j)) / n
