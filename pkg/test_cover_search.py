#!/usr/bin/env python3
"""
Tests for cover construction, halfspace ERM and the tuple searches
"""

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cover_search import (BooleanHypothesis, Cover, Halfspace, build_cover, cell_boolean_erm, cell_indices,
                          conjunction_table, empirical_error, erm_halfspace, hypothesis_from_dict, search_boolean,
                          search_intersection, sphere_net, threshold_grid)
from learner_errors import InputError, ResourceBudgetError
from spectral_reduction import Subspace
from synthetic_data_manager import LabeledDataset


def _random_unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _exhaustive_boolean(hs, data):
    """Best error over all 2^(2^K) truth tables"""
    cells = cell_indices(np.stack([h.predict(data.points) for h in hs], axis=1))
    best = np.inf
    for bits in itertools.product((-1, 1), repeat=2 ** len(hs)):
        best = min(best, float(np.mean(np.array(bits)[cells] != data.labels)))
    return best


# ============================================================================
# HYPOTHESES
# ============================================================================

def test_halfspace_predicts_plus_on_boundary():
    h = Halfspace(np.array([1.0, 0.0]), 0.0)
    assert h.predict(np.array([[0.0, 5.0], [-1e-9, 0.0]])).tolist() == [1, -1]


def test_halfspace_validation_and_constants():
    with pytest.raises(InputError):
        Halfspace(np.array([1.0, 1.0]), 0.0)
    c = Halfspace.constant(3, -1)
    assert c.is_constant
    assert c.predict(np.ones((4, 3))).tolist() == [-1] * 4
    assert Halfspace.from_line("0.0 0.0 0.0 1.0").constant_sign == 1
    h = Halfspace.from_direction(np.array([3.0, 4.0]), 0.5)
    assert_allclose(h.normal, [0.6, 0.8])


def test_hypothesis_dict_roundtrip():
    rng = np.random.default_rng(0)
    hs = (Halfspace(_random_unit(rng, 3), 0.3), Halfspace(_random_unit(rng, 3), -0.2))
    h = BooleanHypothesis(hs, np.array([-1, 1, 1, -1]))
    X = rng.standard_normal((50, 3))
    restored = hypothesis_from_dict(h.to_dict())
    assert np.array_equal(restored.predict(X), h.predict(X))
    assert h.to_dict()['truth_table'] == '0110'


def test_conjunction_table():
    assert conjunction_table(2).tolist() == [-1, -1, -1, 1]


def test_cell_indices_bit_order():
    preds = np.array([[1, -1], [-1, 1], [1, 1], [-1, -1]])
    assert cell_indices(preds).tolist() == [1, 2, 3, 0]


# ============================================================================
# COVERS
# ============================================================================

def test_threshold_grid_spacing():
    grid = threshold_grid(0.1)
    assert np.all(np.diff(grid) <= 0.05 + 1e-12)
    assert grid[0] == pytest.approx(-grid[-1])


def test_cover_rank_zero_is_the_constants():
    cover = build_cover(Subspace.empty(4), 0.25)
    assert len(cover) == 2
    assert [h.constant_sign for h in cover.hypotheses] == [1, -1]


def test_cover_rank_one():
    V = Subspace(np.eye(4)[:, :1])
    cover = build_cover(V, 0.25)
    grid = threshold_grid(0.25)
    assert len(cover) == 2 * len(grid) + 2
    directions = {tuple(np.round(n, 12)) for n in cover.normals[2:]}
    assert directions == {(1.0, 0.0, 0.0, 0.0), (-1.0, 0.0, 0.0, 0.0)}


def test_cover_normals_lie_in_subspace_and_are_deterministic():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    V = Subspace(Q)
    cover = build_cover(V, 0.2, seed=3)
    assert_allclose(cover.normals[2:] - V.project(cover.normals[2:]), 0.0, atol=1e-10)
    assert_allclose(np.linalg.norm(cover.normals[2:], axis=1), 1.0, atol=1e-12)
    again = build_cover(V, 0.2, seed=3)
    assert np.array_equal(cover.normals, again.normals)


def test_sphere_net_is_a_net():
    net = sphere_net(2, 0.2, seed=0)
    angles = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    circle = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    distances = np.min(np.linalg.norm(circle[:, None, :] - net[None, :, :], axis=2), axis=1)
    # candidates are dense, so the covering radius is close to eps/2
    assert distances.max() <= 0.2


def test_cover_disagreement_is_small():
    rng = np.random.default_rng(2)
    eps = 0.1
    V = Subspace(np.eye(3)[:, :2])
    cover = build_cover(V, eps)
    X = rng.standard_normal((4000, 3))
    positive = cover.positive_matrix(X)
    t_max = threshold_grid(eps)[-1]
    for _ in range(20):
        v = np.zeros(3)
        v[:2] = _random_unit(rng, 2)
        target = X @ v + rng.uniform(-t_max, t_max) >= 0.0
        disagreement = np.mean(positive != target[:, None], axis=0)
        assert disagreement.min() <= 4 * eps


def test_cover_budget_and_accuracy_guards():
    V = Subspace(np.eye(3)[:, :2])
    with pytest.raises(ResourceBudgetError):
        build_cover(V, 0.25, max_cover=100)
    with pytest.raises(ResourceBudgetError):
        build_cover(Subspace(np.eye(3)), 0.1, max_candidates=1000)
    with pytest.raises(InputError):
        build_cover(V, 0.5)


# ============================================================================
# ERM AND SEARCH
# ============================================================================

def test_erm_halfspace_finds_planted_direction():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((2000, 2))
    data = LabeledDataset(X, np.where(X[:, 0] + 0.3 >= 0, 1, -1))
    cover = build_cover(Subspace(np.eye(2)[:, :1]), 0.1)
    h, error = erm_halfspace(cover, data)
    assert error <= 0.05
    assert h.normal[0] > 0
    assert error == empirical_error(h, data)


def test_erm_halfspace_picks_constant_on_constant_labels():
    X = np.random.default_rng(4).standard_normal((100, 2))
    data = LabeledDataset(X, -np.ones(100, dtype=int))
    h, error = erm_halfspace(build_cover(Subspace(np.eye(2)), 0.25), data)
    assert h.constant_sign == -1
    assert error == 0.0


def test_cell_boolean_erm_matches_exhaustive_search():
    rng = np.random.default_rng(5)
    for K in (1, 2, 3):
        for _ in range(10):
            hs = [Halfspace(_random_unit(rng, 3), float(rng.normal(0, 0.5))) for _ in range(K)]
            n = int(rng.integers(20, 200))
            data = LabeledDataset(rng.standard_normal((n, 3)), np.where(rng.random(n) < 0.5, 1, -1))
            table, error = cell_boolean_erm(hs, data)
            assert error == _exhaustive_boolean(hs, data)
            assert empirical_error(BooleanHypothesis(tuple(hs), table), data) == error


def test_cell_boolean_erm_empty_cells_default_to_plus():
    hs = [Halfspace(np.array([1.0, 0.0]), 10.0), Halfspace(np.array([0.0, 1.0]), 10.0)]
    X = np.random.default_rng(6).standard_normal((30, 2))
    table, _ = cell_boolean_erm(hs, LabeledDataset(X, -np.ones(30, dtype=int)))
    assert table.tolist() == [1, 1, 1, -1]


def test_search_boolean_recovers_xor():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((600, 2))
    xor = BooleanHypothesis((Halfspace(np.array([1.0, 0.0]), 0.0), Halfspace(np.array([0.0, 1.0]), 0.0)),
                            np.array([-1, 1, 1, -1]))
    data = LabeledDataset(X, xor.predict(X))
    cover = build_cover(Subspace(np.eye(2)), 0.25)
    h, error = search_boolean(cover, 2, data)
    assert error <= 0.15
    assert error == empirical_error(h, data)


def test_search_boolean_is_exact_over_small_cover():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((150, 2))
    data = LabeledDataset(X, np.where(rng.random(150) < 0.4, 1, -1))
    cover = build_cover(Subspace(np.eye(2)[:, :1]), 0.4)
    h, error = search_boolean(cover, 2, data)
    best = min(_exhaustive_boolean([cover.hypotheses[i], cover.hypotheses[j]], data)
               for i, j in itertools.combinations_with_replacement(range(len(cover)), 2))
    assert error == best


def test_search_intersection_uses_conjunction():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((500, 2))
    y = np.where((X[:, 0] + 0.5 >= 0) & (X[:, 1] + 0.5 >= 0), 1, -1)
    cover = build_cover(Subspace(np.eye(2)), 0.2)
    h, error = search_intersection(cover, 2, LabeledDataset(X, y))
    assert h.truth_table.tolist() == [-1, -1, -1, 1]
    assert error <= 0.1


def test_search_budget_reports_best_so_far():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((100, 2))
    data = LabeledDataset(X, np.where(X[:, 0] >= 0, 1, -1))
    cover = build_cover(Subspace(np.eye(2)), 0.25)
    with pytest.raises(ResourceBudgetError) as info:
        search_boolean(cover, 2, data, max_tuples=50)
    hypothesis, error = info.value.best_so_far
    assert hypothesis.K == 2
    assert 0.0 <= error <= 1.0


def test_search_results_independent_of_threads():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((300, 2))
    data = LabeledDataset(X, np.where(rng.random(300) < 0.5, 1, -1))
    cover = build_cover(Subspace(np.eye(2)), 0.3)
    h1, e1 = search_boolean(cover, 2, data, threads=1)
    h4, e4 = search_boolean(cover, 2, data, threads=4)
    assert e1 == e4
    assert h1.to_dict() == h4.to_dict()


def test_enlarging_the_cover_never_increases_the_error():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((400, 2))
    y = np.where(X @ np.array([0.8, 0.6]) + 0.3 >= 0, 1, -1)
    y[rng.random(400) < 0.1] *= -1
    data = LabeledDataset(X, y)
    line = Subspace(np.eye(2)[:, :1])
    base = build_cover(line, 0.3)
    enlarged = Cover.from_hypotheses(base.hypotheses + build_cover(line, 0.15).hypotheses, line)
    assert len(enlarged) > len(base)
    assert erm_halfspace(enlarged, data)[1] <= erm_halfspace(base, data)[1]
    assert search_boolean(enlarged, 2, data)[1] <= search_boolean(base, 2, data)[1]
    assert search_intersection(enlarged, 2, data)[1] <= search_intersection(base, 2, data)[1]


def test_single_halfspace_searches_match_erm():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((300, 2))
    y = np.where(X[:, 0] - 0.4 * X[:, 1] >= 0.2, 1, -1)
    y[rng.random(300) < 0.15] *= -1
    data = LabeledDataset(X, y)
    # a rank-one cover is closed under negation
    cover = build_cover(Subspace(np.eye(2)[:, :1]), 0.25)
    _, erm_error = erm_halfspace(cover, data)
    assert search_intersection(cover, 1, data)[1] == erm_error
    assert search_boolean(cover, 1, data)[1] == erm_error


def test_all_negative_validation_is_fit_exactly_by_an_intersection():
    X = np.random.default_rng(14).standard_normal((120, 2))
    data = LabeledDataset(X, -np.ones(120, dtype=int))
    h, error = search_intersection(build_cover(Subspace(np.eye(2)), 0.3), 2, data)
    assert error == 0.0
    assert np.all(h.predict(X) == -1)


def test_permuting_a_tuple_with_its_table_keeps_the_error():
    rng = np.random.default_rng(15)
    X = rng.standard_normal((250, 3))
    data = LabeledDataset(X, np.where(rng.random(250) < 0.5, 1, -1))
    hs = [Halfspace(_random_unit(rng, 3), float(rng.normal(0, 0.5))) for _ in range(3)]
    table = np.where(rng.random(8) < 0.5, 1, -1)
    error = empirical_error(BooleanHypothesis(tuple(hs), table), data)
    for order in itertools.permutations(range(3)):
        permuted = np.empty_like(table)
        for b in range(8):
            permuted[sum(((b >> src) & 1) << dst for dst, src in enumerate(order))] = table[b]
        h = BooleanHypothesis(tuple(hs[i] for i in order), permuted)
        assert empirical_error(h, data) == error
        assert np.array_equal(h.predict(X), BooleanHypothesis(tuple(hs), table).predict(X))


def test_erm_error_is_counted_on_the_batched_margins():
    X = np.array([[1.0, 0.0], [-1.0, 2.0], [0.5, -0.5], [3.0, 1.0]])
    data = LabeledDataset(X, np.array([1, -1, 1, -1]))
    line = Subspace(np.eye(2)[:, :1])
    cover = Cover.from_hypotheses([Halfspace(np.array([1.0, 0.0]), -1.0), Halfspace(np.array([1.0, 0.0]), 0.0)], line)
    h, error = erm_halfspace(cover, data)
    index = cover.hypotheses.index(h)
    assert error == float(np.mean(cover.positive_matrix(X)[:, index] != (data.labels > 0)))
    assert error == 0.25


def test_cover_requires_hypotheses():
    with pytest.raises(InputError):
        Cover((), 0.1, Subspace.empty(2))
