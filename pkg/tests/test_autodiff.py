"""Forward-mode dual numbers: exactness against closed forms and finite differences."""

import numpy as np
import pytest

from crossflow.autodiff import Dual, ad_einsum, differentiate, dstack, seed_identity
from crossflow.errors import DomainError


def test_square_at_three():
    val, grad = differentiate(lambda x: x[0] ** 2, np.array([3.0]))
    assert val == 9.0
    np.testing.assert_allclose(grad, [6.0])


def test_sin_at_zero():
    val, grad = differentiate(lambda x: np.sin(x[0]), np.array([0.0]))
    assert val == 0.0
    np.testing.assert_allclose(grad, [1.0])


def composite(x):
    # exercises every supported primitive
    a = x[0] * x[1] + x[2] / (x[3] + 5.0)
    b = np.sin(x[4]) * np.cos(x[5] * x[6]) + np.sqrt(x[7] ** 2 + 1.0)
    c = (x[8] + 2.0) ** 3 - x[9] * np.sin(x[0])
    total = a * b + c
    for i in range(10, 20):
        total = total + np.cos(x[i]) * x[i - 1] - x[i] / (2.0 + np.sin(x[i - 2]))
    return total


def test_composite_matches_central_differences():
    rng = np.random.default_rng(17)
    for _ in range(5):
        x = rng.uniform(-1.5, 1.5, 20)
        val, grad = differentiate(composite, x)
        h = 1e-6
        for i in range(20):
            e = np.zeros(20)
            e[i] = h
            fd = (composite(x + e) - composite(x - e)) / (2 * h)
            denom = max(1.0, abs(fd))
            assert abs(grad[i] - fd) / denom < 1e-6, f"component {i}"


def test_vector_function_jacobian():
    def f(x):
        return dstack([x[0] * x[1], np.sin(x[0]), x[1] ** 2 - x[0]])

    x = np.array([0.7, -1.2])
    vals, jac = differentiate(f, x)
    np.testing.assert_allclose(vals, [-0.84, np.sin(0.7), 1.44 - 0.7], rtol=1e-12)
    expected = np.array([[-1.2, 0.7], [np.cos(0.7), 0.0], [-1.0, -2.4]])
    np.testing.assert_allclose(jac, expected, rtol=1e-12)


def test_sparse_seeding_restricts_columns():
    def f(x):
        return x[0] * x[1] + x[2] ** 2

    x = np.array([1.0, 2.0, 3.0])
    seeds = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    _, grad = differentiate(f, x, seeds)
    np.testing.assert_allclose(grad, [2.0, 6.0])


def test_batched_identity_seeds():
    x = np.arange(12.0).reshape(4, 3) + 1.0
    d = seed_identity(x)
    y = d[:, 0] * d[:, 1] + np.sqrt(d[:, 2])
    np.testing.assert_allclose(y.val, x[:, 0] * x[:, 1] + np.sqrt(x[:, 2]))
    np.testing.assert_allclose(y.dot[:, 0], x[:, 1])
    np.testing.assert_allclose(y.dot[:, 1], x[:, 0])
    np.testing.assert_allclose(y.dot[:, 2], 0.5 / np.sqrt(x[:, 2]))


def test_ad_einsum_linear_map():
    D = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]])
    x = seed_identity(np.array([2.0, -1.0]))
    y = ad_einsum("ij,j...->i...", D, x)
    np.testing.assert_allclose(y.val, D @ np.array([2.0, -1.0]))
    np.testing.assert_allclose(y.dot, D)


def test_division_by_zero_raises():
    with pytest.raises(DomainError):
        differentiate(lambda x: 1.0 / x[0], np.array([0.0]))
    with pytest.raises(DomainError):
        differentiate(lambda x: x[1] / (x[0] - 1.0), np.array([1.0, 2.0]))


def test_sqrt_of_negative_raises():
    with pytest.raises(DomainError):
        differentiate(lambda x: np.sqrt(x[0]), np.array([-1.0]))


def test_fractional_power_of_negative_raises():
    with pytest.raises(DomainError):
        differentiate(lambda x: x[0] ** 0.5, np.array([-2.0]))


def test_scalar_mixing_and_rops():
    def f(x):
        return 3.0 / (x[0] + 1.0) + (2.0 - x[0]) * 4.0 - (-x[0])

    x = np.array([1.0])
    val, grad = differentiate(f, x)
    assert val == pytest.approx(3.0 / 2.0 + 4.0 + 1.0)
    assert grad[0] == pytest.approx(-3.0 / 4.0 - 4.0 + 1.0)


def test_reshape_and_sum():
    d = seed_identity(np.arange(6.0))
    m = d.reshape(2, 3)
    total = (m * m).sum()
    assert total.val == pytest.approx(np.sum(np.arange(6.0) ** 2))
    np.testing.assert_allclose(total.dot, 2 * np.arange(6.0))


def test_constant_function_returns_zero_gradient():
    val, grad = differentiate(lambda x: np.array(5.0), np.array([1.0, 2.0]))
    assert val == 5.0
    np.testing.assert_allclose(grad, [0.0, 0.0])


def test_dual_shape_validation():
    with pytest.raises(ValueError):
        Dual(np.zeros(3), np.zeros((4, 2)))
