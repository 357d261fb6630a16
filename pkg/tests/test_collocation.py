"""Radau node/weight construction and interpolant operators."""

import numpy as np
import pytest

from crossflow.collocation import (
    TranscriptionConfig,
    collocation_coefficients,
)


def test_degree_one_is_implicit_euler():
    c = collocation_coefficients(1)
    np.testing.assert_allclose(c.nodes, [1.0], atol=1e-14)
    np.testing.assert_allclose(c.quad_weights, [1.0], atol=1e-14)


@pytest.mark.parametrize("degree", range(1, 10))
def test_quadrature_weights_sum_to_one(degree):
    c = collocation_coefficients(degree)
    assert c.quad_weights.sum() == pytest.approx(1.0, abs=1e-13)


def test_degree_five_integrates_degree_eight_exactly():
    c = collocation_coefficients(5)
    val = float(c.quad_weights @ c.nodes**8)
    assert abs(val - 1.0 / 9.0) <= 1e-12


@pytest.mark.parametrize("degree", range(1, 10))
def test_quadrature_exactness_order(degree):
    # Radau rule with d points is exact up to degree 2d - 2
    c = collocation_coefficients(degree)
    for k in range(2 * degree - 1):
        val = float(c.quad_weights @ c.nodes**k)
        assert val == pytest.approx(1.0 / (k + 1), abs=1e-11), f"monomial t^{k}"


@pytest.mark.parametrize("degree", range(1, 10))
def test_endpoint_included(degree):
    c = collocation_coefficients(degree)
    assert c.nodes[-1] == 1.0
    assert np.all(c.nodes > 0)
    assert np.all(np.diff(c.nodes) > 0)


@pytest.mark.parametrize("degree", [1, 2, 3, 5, 7, 9])
def test_derivative_matrix_exact_on_polynomials(degree):
    # the interpolant through {0, nodes} differentiates polynomials of degree
    # <= d exactly at the collocation points
    c = collocation_coefficients(degree)
    support = np.concatenate([[0.0], c.nodes])
    rng = np.random.default_rng(degree)
    coeffs = rng.uniform(-1, 1, degree + 1)
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    values = poly(support)
    approx = c.diff_matrix @ values
    np.testing.assert_allclose(approx, dpoly(c.nodes), atol=1e-10)


@pytest.mark.parametrize("degree", [1, 3, 5, 9])
def test_end_weights_evaluate_at_one(degree):
    c = collocation_coefficients(degree)
    support = np.concatenate([[0.0], c.nodes])
    rng = np.random.default_rng(degree + 100)
    coeffs = rng.uniform(-1, 1, degree + 1)
    poly = np.polynomial.Polynomial(coeffs)
    assert float(c.end_weights @ poly(support)) == pytest.approx(poly(1.0), abs=1e-12)
    # stiffly accurate family: the end state is the last node value
    expected = np.zeros(degree + 1)
    expected[-1] = 1.0
    np.testing.assert_allclose(c.end_weights, expected, atol=1e-10)


def test_unsupported_inputs():
    with pytest.raises(ValueError):
        collocation_coefficients(0)
    with pytest.raises(ValueError):
        collocation_coefficients(10)
    with pytest.raises(ValueError):
        collocation_coefficients(3, scheme="lobatto")
    with pytest.raises(ValueError):
        TranscriptionConfig(intervals=0)
    with pytest.raises(ValueError):
        TranscriptionConfig(degree=11)
