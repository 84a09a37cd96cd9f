import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coevo.architecture import random_genome
from coevo.errors import ShapeError
from coevo.moea_core import (ApproxParetoSet, ApsMember, crowding_distance, das_dennis_weights,
                             dominates, estimate_true_pareto, hv_indicator, hypervolume,
                             nondominated_mask, nondominated_sort, read_aps, tchebycheff, write_aps)
from coevo.selftest import brute_fronts, brute_nondominated, monte_carlo_hv

fronts2 = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30).map(np.array)
fronts3 = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=25).map(np.array)
grid_points = st.lists(st.tuples(*[st.integers(0, 5)] * 3), min_size=1, max_size=60).map(lambda v: np.array(v) / 5)


# ---- dominance ----------------------------------------------------------------------

def test_dominates_examples():
    assert dominates((0.2, 0.3), (0.4, 0.3))
    assert not dominates((0.2, 0.3), (0.2, 0.3))
    assert not dominates((0.1, 0.9), (0.9, 0.1))
    assert not dominates((0.9, 0.1), (0.1, 0.9))


def test_dominates_length_mismatch():
    with pytest.raises(ShapeError):
        dominates((1, 2), (1, 2, 3))


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.integers(0, 3)] * 3), st.tuples(*[st.integers(0, 3)] * 3))
def test_dominance_is_asymmetric(a, b):
    assert not (dominates(a, b) and dominates(b, a))


def test_sort_singleton():
    assert nondominated_sort([(1, 1)]) == [[0]]


def test_sort_small_example():
    assert nondominated_sort([(0, 1), (1, 0), (1, 1)]) == [[0, 1], [2]]


def test_sort_matches_brute_force(rng):
    P = rng.random((50, 3))
    assert nondominated_sort(P) == brute_fronts(P)


@settings(max_examples=150, deadline=None)
@given(grid_points)
def test_sort_partitions_and_ranks(P):
    fronts = nondominated_sort(P)
    flat = sorted(i for f in fronts for i in f)
    assert flat == list(range(len(P)))
    assert fronts == brute_fronts(P)
    np.testing.assert_array_equal(nondominated_mask(P), np.isin(np.arange(len(P)), fronts[0]))


# ---- crowding --------------------------------------------------------------------------

def test_crowding_two_points_infinite():
    assert np.all(np.isinf(crowding_distance([(0, 1), (1, 0)])))


def test_crowding_middle_point():
    d = crowding_distance([(0, 1), (0.5, 0.5), (1, 0)])
    assert math.isinf(d[0]) and math.isinf(d[2])
    assert d[1] == pytest.approx(2.0)


def test_crowding_identical_points():
    d = crowding_distance([(0.3, 0.3)] * 4)
    assert np.sum(np.isinf(d)) == 2
    assert np.all(d[np.isfinite(d)] == 0)


# ---- weights and scalarisation ------------------------------------------------------------

def test_das_dennis_two_objectives():
    np.testing.assert_allclose(das_dennis_weights(2, 4),
                               [[0, 1], [0.25, 0.75], [0.5, 0.5], [0.75, 0.25], [1, 0]])


def test_das_dennis_counts():
    assert len(das_dennis_weights(3, 2)) == 6
    W = das_dennis_weights(3, 12)
    assert len(W) == 91 == math.comb(14, 2)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert len(np.unique(W, axis=0)) == 91


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(1, 10))
def test_das_dennis_lattice(m, H):
    W = das_dennis_weights(m, H)
    assert len(W) == math.comb(H + m - 1, m - 1)
    np.testing.assert_allclose(W * H, np.round(W * H), atol=1e-9)
    assert np.all(W >= 0)


def test_tchebycheff_examples():
    assert tchebycheff((0.4, 0.2), (0.5, 0.5), (0.4, 0.2)) == 0.0
    assert tchebycheff((0.3, 9.0), (1.0, 0.0), (0.0, 0.0)) == pytest.approx(0.3)
    assert tchebycheff((0.2, 0.6), (0.5, 0.5), (0.0, 0.0)) == pytest.approx(0.3)


# ---- hypervolume --------------------------------------------------------------------------

def test_hv_unit_box():
    assert hypervolume([(0, 0)], (1, 1)) == 1.0


def test_hv_three_point_front():
    P = np.array([(0.2, 0.8), (0.5, 0.5), (0.8, 0.2)])
    assert hypervolume(P, (1, 1)) == pytest.approx(0.37, abs=1e-12)
    est, se = monte_carlo_hv(P, np.array([1.0, 1.0]), 1_000_000, np.random.default_rng(0))
    assert abs(est - 0.37) < 0.002


def test_hv_empty_front():
    assert hypervolume(np.zeros((0, 2)), (1, 1)) == 0.0


def test_hv_points_outside_ref_are_dropped():
    assert hypervolume([(0.5, 0.5), (1.0, 0.2), (2.0, 0.0)], (1, 1)) == pytest.approx(0.25)


def test_hv_three_objective_box():
    assert hypervolume([(0.5, 0.5, 0.5)], (1, 1, 1)) == pytest.approx(0.125)
    assert hypervolume([(0, 0.5, 0.5), (0.5, 0, 0.5)], (1, 1, 1)) == pytest.approx(0.375)


@settings(max_examples=80, deadline=None)
@given(fronts2, st.tuples(st.floats(0, 1), st.floats(0, 1)))
def test_hv_monotone_2d(P, extra):
    ref = np.array([1.1, 1.1])
    assert hypervolume(np.vstack([P, extra]), ref) >= hypervolume(P, ref) - 1e-12


@settings(max_examples=60, deadline=None)
@given(fronts3, st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)))
def test_hv_monotone_3d(P, extra):
    ref = np.array([1.1, 1.1, 1.1])
    assert hypervolume(np.vstack([P, extra]), ref) >= hypervolume(P, ref) - 1e-12


@settings(max_examples=60, deadline=None)
@given(fronts2)
def test_hv_2d_agrees_with_3d_slab(P):
    # a constant third objective turns the 2-D area into a unit-depth volume
    P3 = np.column_stack([P, np.zeros(len(P))])
    assert hypervolume(P3, (1.1, 1.1, 1.0)) == pytest.approx(hypervolume(P, (1.1, 1.1)), abs=1e-12)


def test_hv_matches_monte_carlo(rng):
    for m in (2, 3):
        P = rng.random((20, m))
        ref = np.full(m, 1.1)
        est, se = monte_carlo_hv(P, ref, 200_000, rng)
        assert abs(hypervolume(P, ref) - est) <= 4 * se


# ---- union front and indicator ----------------------------------------------------------------

def test_gamma_star_single_set_is_itself():
    A = np.array([(0.1, 0.9), (0.5, 0.5), (0.9, 0.1)])
    np.testing.assert_array_equal(estimate_true_pareto([A]), A)


def test_gamma_star_absorbs_dominated_set():
    A = np.array([(0.1, 0.5), (0.5, 0.1)])
    B = A + 0.2
    np.testing.assert_array_equal(estimate_true_pareto([A, B]), A)


def test_gamma_star_matches_brute_force(rng):
    sets = [np.round(rng.random((40, 2)), 2) for _ in range(4)]
    np.testing.assert_array_equal(estimate_true_pareto(sets), brute_nondominated(np.vstack(sets)))


def test_indicator_of_gamma_star_is_one():
    G = np.array([(0.1, 0.9), (0.4, 0.4), (0.9, 0.1)])
    assert hv_indicator(G, G) == pytest.approx(1.0)


def test_indicator_worst_corner():
    G = np.array([(0.0, 1.0), (1.0, 0.0)])
    denom = hypervolume(G, (1.1, 1.1))
    assert hv_indicator([(1.0, 1.0)], G) == pytest.approx(0.01 / denom)


def test_indicator_dominated_set_is_below_one():
    G = np.array([(0.1, 0.9), (0.4, 0.4), (0.9, 0.1)])
    assert hv_indicator(G + 0.05, G) < 1.0


def test_indicator_degenerate_objective():
    G = np.array([(0.2, 0.5)])
    assert hv_indicator(G, G) == pytest.approx(1.0)


# ---- APS records ---------------------------------------------------------------------------------

def test_from_population_keeps_distinct_first_front(rng):
    g = [random_genome(rng) for _ in range(3)]
    genomes = [g[0], g[0], g[1], g[2]]
    aps = ApproxParetoSet.from_population(genomes, [(0.1, 0.5), (0.1, 0.5), (0.5, 0.1), (0.6, 0.6)])
    assert len(aps) == 2
    aps.check()


def test_check_rejects_dominated_member(rng):
    aps = ApproxParetoSet([ApsMember(random_genome(rng), (0.1, 0.1)), ApsMember(random_genome(rng), (0.2, 0.2))])
    with pytest.raises(ValueError):
        aps.check()


def test_aps_file_round_trip(tmp_path, rng):
    sets = [ApproxParetoSet([ApsMember(random_genome(rng), (0.1 * r, 0.5))], "LS+EAGD", r, 100 + r) for r in range(3)]
    path = tmp_path / "aps.jsonl"
    write_aps(path, sets, header={"note": "x"})
    back = read_aps(path)
    assert [a.run_id for a in back] == [0, 1, 2]
    for a, b in zip(sets, back):
        np.testing.assert_array_equal(a.members[0].genome, b.members[0].genome)
        assert a.members[0].objectives == b.members[0].objectives
        assert b.members[0].architecture == a.members[0].architecture
