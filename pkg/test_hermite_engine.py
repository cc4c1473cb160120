#!/usr/bin/env python3
"""
Tests for the Hermite engine: enumeration, evaluation, gradient maps and the
quadrature oracle
"""

import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e
from numpy.testing import assert_allclose

from hermite_engine import (GaussHermiteQuadrature, PolyCoeffs, enumerate_multi_indices, feature_map,
                            gradient_coeff_matrix, gradient_energy, gradient_operator, hermite_eval, hermite_table,
                            multi_index_array, multi_index_position, num_multi_indices, poly_eval,
                            poly_gradient_eval, read_poly_coeffs, write_poly_coeffs)
from learner_errors import InputError


def _scaled(coeffs):
    """Normalized Hermite coefficients -> hermite_e coefficients"""
    return np.array([c / math.sqrt(math.factorial(j)) for j, c in enumerate(coeffs)])


def test_enumeration_count_and_grading():
    for d, k in [(1, 0), (2, 2), (3, 4), (5, 3)]:
        indices = enumerate_multi_indices(d, k)
        assert len(indices) == num_multi_indices(d, k) == math.comb(d + k, k)
        degrees = [alpha.degree for alpha in indices]
        assert degrees == sorted(degrees)
        assert len(set(alpha.entries for alpha in indices)) == len(indices)


def test_first_degree_one_index_is_e1():
    indices = enumerate_multi_indices(3, 2)
    assert indices[0].entries == (0, 0, 0)
    assert indices[1].entries == (1, 0, 0)


def test_enumeration_is_deterministic():
    assert enumerate_multi_indices(4, 3) == enumerate_multi_indices(4, 3)
    position = multi_index_position(4, 3)
    for pos, alpha in enumerate(multi_index_array(4, 3)):
        assert position[tuple(alpha)] == pos


def test_rejects_bad_dimensions():
    with pytest.raises(InputError):
        enumerate_multi_indices(0, 2)
    with pytest.raises(InputError):
        enumerate_multi_indices(2, -1)


def test_hermite_known_values():
    assert hermite_eval(0, 1.7) == 1.0
    assert hermite_eval(1, 1.7) == pytest.approx(1.7)
    assert hermite_eval(4, 0.0) == pytest.approx(math.sqrt(3.0) / (2.0 * math.sqrt(2.0)), abs=1e-14)


def test_hermite_matches_numpy_hermite_e():
    t = np.linspace(-5.0, 5.0, 31)
    table = hermite_table(t, 15)
    for j in range(16):
        reference = hermite_e.hermeval(t, [0.0] * j + [1.0]) / math.sqrt(math.factorial(j))
        assert_allclose(table[:, j], reference, rtol=1e-10, atol=1e-10)


def test_feature_map_single_point_and_matrix():
    indices = multi_index_array(3, 2)
    X = np.random.default_rng(0).standard_normal((5, 3))
    features = feature_map(X, indices)
    assert features.shape == (5, 10)
    assert_allclose(features[:, 0], 1.0)
    assert_allclose(feature_map(X[2], indices), features[2])
    with pytest.raises(InputError):
        feature_map(np.zeros((2, 4)), indices)


def test_poly_eval_product_structure():
    p = PolyCoeffs.from_terms(2, 3, {(2, 1): 1.5})
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    expected = 1.5 * hermite_eval(2, x[:, 0]) * hermite_eval(1, x[:, 1])
    assert_allclose(poly_eval(p, x), expected, rtol=1e-13)


def test_parseval_against_quadrature():
    rng = np.random.default_rng(1)
    for d, k in [(1, 6), (2, 4), (3, 3)]:
        p = PolyCoeffs.random(d, k, rng)
        rule = GaussHermiteQuadrature.for_degree(k, d)
        assert rule.expectation(lambda X: poly_eval(p, X) ** 2) == pytest.approx(p.l2_norm_squared(), abs=1e-8)


def test_quadrature_gram_is_identity():
    indices = multi_index_array(2, 5)
    gram = GaussHermiteQuadrature.for_degree(5, 2).gram_matrix(indices)
    assert_allclose(gram, np.eye(len(indices)), atol=1e-9)


def test_univariate_gradient_matches_hermeder():
    rng = np.random.default_rng(2)
    coeffs = rng.standard_normal(8)
    p = PolyCoeffs(1, 7, coeffs)
    t = np.linspace(-3.0, 3.0, 25)
    expected = hermite_e.hermeval(t, hermite_e.hermeder(_scaled(coeffs)))
    assert_allclose(poly_gradient_eval(p, t[:, None])[:, 0], expected, rtol=1e-10, atol=1e-10)


def test_gradient_energy_three_ways():
    rng = np.random.default_rng(3)
    p = PolyCoeffs.random(3, 4, rng)
    rule = GaussHermiteQuadrature.for_degree(4, 3)
    quad = rule.expectation(lambda X: np.sum(poly_gradient_eval(p, X) ** 2, axis=1))
    assert gradient_energy(p) == pytest.approx(quad, abs=1e-8)
    assert gradient_energy(p) == pytest.approx(gradient_coeff_matrix(p).frobenius_norm_squared(), abs=1e-12)


def test_gradient_operator_adjoint():
    rng = np.random.default_rng(4)
    op = gradient_operator(3, 4)
    c = rng.standard_normal(op.n_coeffs)
    G = rng.standard_normal((op.n_rows, op.n_cols))
    assert float(np.sum(op.apply(c) * G)) == pytest.approx(float(c @ op.adjoint(G)), rel=1e-12)
    assert np.linalg.norm(op.apply(c)) <= op.operator_norm_bound * np.linalg.norm(c) + 1e-12


def test_degree_zero_polynomial_has_zero_gradient():
    p = PolyCoeffs(2, 0, [3.0])
    assert gradient_energy(p) == 0.0
    assert_allclose(poly_gradient_eval(p, np.ones((3, 2))), 0.0)
    assert gradient_coeff_matrix(p).shape == (2, 1)


def test_poly_coeffs_file_roundtrip(tmp_path):
    p = PolyCoeffs.random(2, 3, np.random.default_rng(5))
    path = tmp_path / "poly.txt"
    write_poly_coeffs(path, p)
    q = read_poly_coeffs(path)
    assert (q.dim, q.degree) == (2, 3)
    assert np.array_equal(q.coeffs, p.coeffs)


def test_poly_coeffs_validation():
    with pytest.raises(InputError):
        PolyCoeffs(2, 2, np.zeros(5))
    with pytest.raises(InputError):
        PolyCoeffs.from_terms(2, 1, {(2, 0): 1.0})
    with pytest.raises(InputError):
        PolyCoeffs.from_text("2 1 3\n1.0\n2.0\n")
