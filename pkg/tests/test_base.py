from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncavg.base import (BaseSystem, path_at_state, path_from_symbols, sample_path, shift,
                          splice_future, symbol_frequency, truncate_to_future)
from syncavg.errors import DomainError, InvalidInputError, InvalidShiftError

FAIR = BaseSystem.bernoulli(["1/2", "1/2"])
MARKOV = BaseSystem.markov([["9/10", "1/10"], ["3/10", "7/10"]])
EX21 = BaseSystem.permutation({1: 2, 2: 1})


def test_weights_validation():
    with pytest.raises(InvalidInputError):
        BaseSystem.bernoulli(["1/2", "2/5"])
    with pytest.raises(InvalidInputError):
        BaseSystem.bernoulli([Fraction(3, 2), Fraction(-1, 2)])
    assert BaseSystem.bernoulli([0.3, 0.7]).weights == (Fraction(3, 10), Fraction(7, 10))


def test_markov_stationary_is_exact():
    v = MARKOV.weights
    assert v == (Fraction(3, 4), Fraction(1, 4))
    m = MARKOV.matrix
    assert [sum(v[i] * m[i][j] for i in range(2)) for j in range(2)] == list(v)
    with pytest.raises(InvalidInputError):
        BaseSystem.markov([[1, 0], [0, 1]], stationary=["1/2", "1/3"])


def test_kind_invertibility():
    assert EX21.invertible and FAIR.invertible
    assert not FAIR.one_sided().invertible
    assert BaseSystem.bernoulli([1], two_sided=False).kind == "one-sided-bernoulli"


def test_permutation_weights_must_be_invariant():
    with pytest.raises(InvalidInputError):
        BaseSystem.permutation({1: 2, 2: 1}, ["1/3", "2/3"])


def test_shift_definition():
    p = path_from_symbols(FAIR, future=[0, 1, 1], fill=0)
    assert p[0] == 0 and p[1] == 1
    assert shift(p, 1)[0] == 1


@pytest.mark.parametrize("base", [FAIR, MARKOV, EX21])
def test_shift_inverse_composition(base):
    p = sample_path(base, 11)
    q = shift(shift(p, 3), -3)
    assert np.array_equal(p.indices(-50, 50), q.indices(-50, 50))


def test_swap_identity_system_shift_returns_after_two():
    p = path_at_state(EX21, 1)
    assert shift(p, 2)[0] == 1
    assert p.symbols(0, 6) == [1, 2, 1, 2, 1, 2]
    assert p[-1] == 2


def test_shift_equivariance_is_exact():
    p = sample_path(MARKOV, 5)
    for k in (-7, 0, 4, 13):
        q = shift(p, k)
        assert np.array_equal(q.indices(-20, 20), p.indices(-20 + k, 20 + k))


def test_negative_shift_on_one_sided_base():
    p = sample_path(FAIR.one_sided(), 1)
    with pytest.raises(InvalidShiftError):
        shift(p, -1)
    with pytest.raises(DomainError):
        p.indices(-1, 2)


def test_same_seed_same_path_and_requery_stability():
    a, b = sample_path(MARKOV, 42), sample_path(MARKOV, 42)
    late = b.indices(500, 600)  # materialize out of order
    assert np.array_equal(a.indices(-300, 700)[800:900], late)
    assert np.array_equal(a.indices(0, 100), a.indices(0, 100))
    assert not np.array_equal(sample_path(FAIR, 1).indices(0, 64), sample_path(FAIR, 2).indices(0, 64))


def test_bernoulli_frequency_lln():
    # oracle: direct counting
    syms = sample_path(FAIR, 123).indices(0, 100_000)
    assert 0.49 <= np.mean(syms == 0) <= 0.51
    assert symbol_frequency(sample_path(FAIR, 123), 100_000, 0) == np.mean(syms == 0)


def test_biased_frequency():
    base = BaseSystem.bernoulli(["3/10", "7/10"])
    assert abs(symbol_frequency(sample_path(base, 9), 100_000, 0) - 0.3) <= 0.01


def test_markov_frequency_matches_stationary():
    assert abs(symbol_frequency(sample_path(MARKOV, 3), 100_000, 0) - 0.75) <= 0.01


def test_symbol_frequency_small_cases():
    const = path_from_symbols(FAIR, fill=1)
    assert symbol_frequency(const, 17, 1) == 1.0
    assert symbol_frequency(path_at_state(EX21, 1), 4, 1) == 0.5
    with pytest.raises(DomainError):
        symbol_frequency(const, 5, 7)
    with pytest.raises(DomainError):
        symbol_frequency(const, 0, 1)


def test_sample_path_permutation_alternates():
    for seed in range(5):
        s = sample_path(EX21, seed).symbols(0, 8)
        assert all(a != b for a, b in zip(s, s[1:]))


def test_truncate_to_future():
    p = sample_path(FAIR, 77)
    t = truncate_to_future(p)
    assert t.symbols(0, 10) == p.symbols(0, 10)
    assert not t.base.invertible
    assert truncate_to_future(t) is t
    # commutes with the shift on coordinates >= 0
    assert np.array_equal(truncate_to_future(shift(p, 1)).indices(0, 50), shift(t, 1).indices(0, 50))


def test_truncate_forgets_the_past():
    a = path_from_symbols(FAIR, future=[0, 1, 0], past=[1, 1, 1], seed=4)
    b = path_from_symbols(FAIR, future=[0, 1, 0], past=[0, 0, 0], seed=4)
    assert np.array_equal(truncate_to_future(a).indices(0, 30), truncate_to_future(b).indices(0, 30))


def test_splice_future_keeps_past():
    p, q = sample_path(FAIR, 1), sample_path(FAIR, 2)
    s = splice_future(p, q)
    assert np.array_equal(s.indices(-40, 0), p.indices(-40, 0))
    assert np.array_equal(s.indices(0, 40), q.indices(0, 40))


def _window_law(base, offset, n=3, seeds=10_000):
    c = Counter()
    for seed in range(seeds):
        c[tuple(sample_path(base, seed).indices(offset, offset + n).tolist())] += 1
    return c


@pytest.mark.slow
@pytest.mark.parametrize("base,k", [(MARKOV, 5), (MARKOV, -9), (BaseSystem.bernoulli(["1/5", "4/5"]), -4)])
def test_window_stationarity(base, k):
    a, b = _window_law(base, 0), _window_law(base, k)
    tv = 0.5 * sum(abs(a[w] - b[w]) for w in set(a) | set(b)) / 10_000
    assert tv <= 0.05


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), k=st.integers(-200, 200), i=st.integers(-200, 200))
def test_shift_equivariance_property(seed, k, i):
    p = sample_path(FAIR, seed)
    assert shift(p, k)[i] == p[i + k]
