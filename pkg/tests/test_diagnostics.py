import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest

from syncavg.base import BaseSystem, path_at_state, path_from_symbols, sample_path, shift, truncate_to_future
from syncavg.diagnostics import (ConstantGraph, PullbackGraph, WindowPredictor, basin_average_distance,
                                 diameter_sequences, estimate_invariant_graph, finite_strong_sync,
                                 finite_sync_limit, forward_diameters, invariance_residual,
                                 past_dependence_check, property_suite, strong_sync_profile,
                                 strong_sync_profiles, sync_average, vanishing_attractor_scenario)
from syncavg.errors import ScenarioPreconditionError
from syncavg.product import RandomProduct, make_preset, orbit, pullback_compose
from syncavg.space import epsilon_net


def identity_interval():
    return make_preset("affine-ifs", {"a": [1, 1], "b": [0, 0]})


def constant_interval(c=0.3):
    return make_preset("affine-ifs", {"a": [0, 0], "b": [c, c]})


# -- sync averages -------------------------------------------------------------------


def test_sync_average_examples(halving, swapid):
    p = sample_path(halving.base, 0)
    assert sync_average(halving, p, 0.4, 0.4, 50) == 0.0
    assert sync_average(halving, p, 0.0, 1.0, 4) == 0.46875
    for w in (1, 2):
        for n in (1, 7, 100):
            assert sync_average(swapid, path_at_state(swapid.base, w), 1, 2, n) == 1.0


def test_strong_sync_profile_examples(halving, rotations):
    rp = identity_interval()
    p = sample_path(rp.base, 0)
    assert strong_sync_profile(rp, p, 0.25, 30) == 1.0
    q = sample_path(rotations.base, 0)
    net = epsilon_net(rotations.space, 0.25)
    target = max(min(abs(a - b), 1 - abs(a - b)) for a in net for b in net)
    prof = strong_sync_profiles(rotations, q, 0.25, 200)
    assert np.allclose(prof, target, atol=1e-12, rtol=0)
    assert strong_sync_profile(halving, sample_path(halving.base, 1), 0.25, 1000) <= 0.002


def test_monotone_shortcut_matches_all_pairs(halving):
    # oracle: brute force over every pair of a coarse net
    p = sample_path(halving.base, 2)
    net = epsilon_net(halving.space, 0.1)
    orb = orbit(halving, p, net, 60)
    brute = max(np.abs(orb[:, i] - orb[:, j]).mean() for i in range(net.size) for j in range(net.size))
    assert strong_sync_profile(halving, p, 0.1, 60) == pytest.approx(brute, abs=1e-15)


def test_quantifier_coherence(rotations, halving):
    for rp, eps in ((rotations, 0.1), (halving, 0.1)):
        p = sample_path(rp.base, 3)
        net = epsilon_net(rp.space, eps)
        s = strong_sync_profile(rp, p, eps, 40)
        for x in net[::3]:
            for y in net[1::4]:
                assert sync_average(rp, p, x, y, 40) <= s + 1e-15


# -- diameter sequences ------------------------------------------------------------------


def test_diameter_sequences_halving(halving):
    rep = diameter_sequences(halving, sample_path(halving.base, 7), 40)
    two = 2.0 ** -np.arange(1, 41)
    assert np.array_equal(rep.g, two) and np.array_equal(rep.h, two)
    assert rep.cesaro_g[3] == 0.234375
    assert np.allclose(rep.cesaro_g, np.cumsum(rep.g) / rep.n, atol=1e-12, rtol=0)


def test_diameter_sequences_swap_identity_system(swapid):
    rep = diameter_sequences(swapid, path_at_state(swapid.base, 1), 30)
    assert np.all(rep.g == 1) and np.all(rep.h == 1) and np.all(rep.cesaro_g == 1)


def test_diameter_sequences_identity():
    rp = identity_interval()
    rep = diameter_sequences(rp, sample_path(rp.base, 0), 10)
    assert np.all(rep.g == 1.0) and np.all(rep.h == 1.0)
    fin = make_preset("finite-identity")
    rep = diameter_sequences(fin, sample_path(fin.base, 0), 10)
    assert np.all(rep.g == 1.0)


def test_one_sided_rows_have_no_pullback(halving):
    plus = RandomProduct(halving.base.one_sided(), halving.fibers)
    rep = diameter_sequences(plus, truncate_to_future(sample_path(halving.base, 0)), 5)
    assert np.isnan(rep.h).all() and np.isnan(rep.residual).all()
    assert np.array_equal(rep.g, 2.0 ** -np.arange(1, 6))


def test_report_csv_columns(halving):
    rep = diameter_sequences(halving, sample_path(halving.base, 0), 3)
    buf = io.StringIO()
    rep.to_csv(buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["n", "g_n", "h_n", "cesaro_g", "sync_max", "residual"]
    assert rows[1][:3] == ["1", "0.5", "0.5"] and len(rows) == 4


def test_cesaro_diameter_bound_halving(halving):
    for seed in range(5):
        rep = diameter_sequences(halving, sample_path(halving.base, seed), 200)
        assert np.all(rep.cesaro_g <= 2.0 / rep.n)


# -- invariant graph -------------------------------------------------------------------------


def test_graph_estimate_closed_form(halving):
    past = [1, 0, 1] + [1] * 100
    p = path_from_symbols(halving.base, past=past, fill=0)
    est = estimate_invariant_graph(halving, p, tol=1e-6, probes=[0.0, 1.0])
    deep = pullback_compose(halving, p, 60, 0.0)  # oracle
    exact = 0.5 + 0.125 + 2.0 ** -3  # sum_{k>=4} 2^-k = 2^-3
    assert deep == pytest.approx(exact, abs=2.0 ** -59)
    assert est.converged and abs(est.value - exact) <= 2.0 ** -est.depth
    assert est.cauchy_gap <= 2.0 ** -est.depth


def test_graph_estimate_constant_and_rotations(rotations):
    rp = constant_interval(0.3)
    est = estimate_invariant_graph(rp, sample_path(rp.base, 0), probes=[0.0, 0.5, 1.0])
    assert est.value == 0.3 and est.depth == 1 and est.probe_spread == 0.0 and est.converged
    est = estimate_invariant_graph(rotations, sample_path(rotations.base, 0), n_max=1024)
    assert not est.converged and est.probe_spread > 0.4


def test_probe_spread_bounded_by_image_diameter(halving, rotations):
    for rp in (halving, rotations):
        p = sample_path(rp.base, 1)
        est = estimate_invariant_graph(rp, p, tol=1e-9, n_max=64)
        rep = diameter_sequences(rp, p, est.depth)
        assert est.probe_spread <= rep.h[-1] + 1e-15


def test_invariance_residual_examples(halving, swapid):
    rp = constant_interval(0.6)
    assert invariance_residual(rp, sample_path(rp.base, 3), 5, 20) == 0.0
    for seed in range(5):
        assert invariance_residual(halving, sample_path(halving.base, seed), 40, 10) <= 2.0 ** -39
    assert invariance_residual(swapid, path_at_state(swapid.base, 1), 11, 4) == 1.0
    assert invariance_residual(swapid, path_at_state(swapid.base, 2), 10, 4) == 1.0


def test_invariance_residual_direct_oracle(halving):
    p = sample_path(halving.base, 12)
    direct = max(abs((pullback_compose(halving, shift(p, i), 40, 0.0) + p[i]) / 2
                     - pullback_compose(halving, shift(p, i + 1), 40, 0.0)) for i in range(10))
    assert invariance_residual(halving, p, 40, 10) == pytest.approx(direct, abs=1e-16)


def test_graph_along_matches_pointwise(halving, swapid, rotations):
    for rp in (halving, swapid, rotations):
        p = sample_path(rp.base, 5)
        g = PullbackGraph(rp, 17)
        along = g.along(p, 30)
        assert along.tolist() == [g(shift(p, i)) for i in range(30)]


def test_past_dependence(halving, swapid, rotations):
    for rp in (halving, swapid, rotations):
        assert past_dependence_check(rp, sample_path(rp.base, 1), 30)
    assert all(past_dependence_check(halving, sample_path(halving.base, s), 40, fresh_seed=10_000 + s)
               for s in range(100))


# -- basins --------------------------------------------------------------------------------


def test_basin_average_to_pullback_graph(halving):
    p = sample_path(halving.base, 4)
    g = PullbackGraph(halving, 60)
    x = np.random.default_rng(0).random(5)
    assert np.all(basin_average_distance(halving, p, x, g, 10_000) <= 3e-4)
    on_graph = g(p)
    assert basin_average_distance(halving, p, on_graph, g, 500) <= 2.0 ** -55


def test_basin_generic_callable_matches_vectorized(halving):
    p = sample_path(halving.base, 4)
    g = PullbackGraph(halving, 20)
    assert basin_average_distance(halving, p, 0.2, g, 300) == \
        pytest.approx(basin_average_distance(halving, p, 0.2, lambda q: g(q), 300), abs=1e-15)


@pytest.mark.slow
def test_basin_constant_half_one_sided(halving):
    plus = RandomProduct(halving.base.one_sided(), halving.fibers)
    p = truncate_to_future(sample_path(halving.base, 21))
    x = float(np.random.default_rng(1).random())
    assert basin_average_distance(plus, p, x, ConstantGraph(0.5), 100_000) == pytest.approx(0.25, abs=0.01)


def test_window_predictor_codes(halving):
    p = path_from_symbols(halving.base, future=[1, 0, 1, 1], fill=0)
    pred = WindowPredictor(2, {0b10: 0.9, 0b01: 0.1}, 0.5)
    assert pred.along(p, 3).tolist() == [0.9, 0.1, 0.5]
    assert pred(shift(p, 1)) == 0.1


# -- vanishing attractor -----------------------------------------------------------------------


@pytest.mark.slow
def test_vanishing_attractor_halving(halving):
    rep = vanishing_attractor_scenario(halving, {"seed": 3})
    assert rep.two_sided_average <= 1e-3
    assert all(v >= 0.24 for v in rep.window_floors.values())
    assert rep.independence_bound == pytest.approx(0.25, abs=0.01)
    assert all(v.passed for v in rep.verdicts)


def test_vanishing_preconditions(swapid):
    with pytest.raises(ScenarioPreconditionError):
        vanishing_attractor_scenario(make_preset("affine-ifs", {"a": ["1/2", "1/2"], "b": [0, 0]}))
    with pytest.raises(ScenarioPreconditionError):
        vanishing_attractor_scenario(swapid)


# -- structural properties ------------------------------------------------------------------------


def test_property_suite_halving_zero_slack(halving):
    rep = property_suite(halving, list(range(50)), 30)
    assert rep.exact and all(c == 50 for c in rep.pass_counts.values())
    assert all(v.passed and v.threshold == 0.0 for v in rep.verdicts)


def test_property_suite_example_equalities(swapid):
    rep = property_suite(swapid, list(range(10)), 15)
    assert all(c == 10 for c in rep.pass_counts.values())
    assert rep.max_excess["h_monotone"] == 0.0 and rep.max_excess["g_shift_subadditive"] == 0.0


def test_property_suite_rotations(rotations):
    rep = property_suite(rotations, list(range(5)), 20)
    assert not rep.exact and all(v.passed for v in rep.verdicts)


def test_subadditivity_against_direct_definitions(halving):
    # oracle: recompute g_m(theta^k omega) from scratch with forward_diameters on shifted paths
    p = sample_path(halving.base, 1)
    g = forward_diameters(halving, p, 12)
    for m in range(1, 6):
        for k in range(1, 6):
            assert g[m + k - 1] <= forward_diameters(halving, shift(p, k), m)[-1]


# -- finite exact sync -------------------------------------------------------------------------


def test_finite_sync_limits(swapid):
    assert finite_sync_limit(swapid, 1, 1, 2) == 1
    assert finite_sync_limit(swapid, 2, 1, 1) == 0
    assert finite_strong_sync(swapid) == (False, Fraction(1))
    const = make_preset("finite-constant")
    assert finite_strong_sync(const) == (True, Fraction(0))


def test_finite_sync_limit_vs_long_simulation():
    # a 3-point system whose pair orbit visits distance 1 one step in three
    base = BaseSystem.permutation({0: 1, 1: 2, 2: 0})
    table = [[0, "a", "b"], [0, "b", "c"], [0, "c", "c"], [1, "a", "a"], [1, "b", "b"], [1, "c", "c"],
             [2, "a", "a"], [2, "b", "b"], [2, "c", "a"]]
    rp = make_preset("finite-table", {"points": ["a", "b", "c"], "table": table}, base)
    for w in (0, 1, 2):
        for x, y in (("a", "b"), ("a", "c"), ("b", "c")):
            exact = finite_sync_limit(rp, w, x, y)
            sim = sync_average(rp, path_at_state(base, w), x, y, 30_000)
            assert float(exact) == pytest.approx(sim, abs=1e-3)
