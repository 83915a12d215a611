from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from hermvar.exceptions import DomainError
from hermvar.services.hermite import (
    gaussian_expectation,
    hermite_derivative,
    hermite_eval,
    hermite_eval_batch,
)


@pytest.mark.parametrize(
    ("q", "x", "expected"),
    [(2, 3.0, 8.0), (0, 17.5, 1.0), (4, 0.0, 3.0), (3, 1.0, -2.0), (1, -2.5, -2.5)],
)
def test_hermite_eval_examples(q, x, expected):
    assert hermite_eval(q, x) == expected


def test_hermite_eval_batch_examples():
    np.testing.assert_array_equal(hermite_eval_batch(2, np.array([0.0, 1.0, 2.0])), [-1.0, 0.0, 3.0])
    np.testing.assert_array_equal(hermite_eval_batch(1, np.array([5.0])), [5.0])
    np.testing.assert_array_equal(hermite_eval_batch(4, np.array([1.0])), [-2.0])


def test_batch_is_bit_identical_to_scalar_loop():
    xs = np.linspace(-6.0, 6.0, 97)
    for q in range(0, 13):
        scalar = np.array([hermite_eval(q, x) for x in xs])
        assert np.array_equal(hermite_eval_batch(q, xs), scalar)


def test_matches_derivative_recursion():
    # H_{q+1} = x H_q - H_q' built on exact polynomial coefficients.
    x_poly = Polynomial([0.0, 1.0])
    poly = Polynomial([1.0])
    xs = np.linspace(-6.0, 6.0, 49)
    for q in range(0, 12):
        expected = poly(xs)
        got = hermite_eval_batch(q, xs)
        np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-9 * np.abs(expected).max())
        poly = x_poly * poly - poly.deriv()


def test_three_term_recurrence_holds():
    xs = np.linspace(-6.0, 6.0, 61)
    for q in range(1, 12):
        lhs = hermite_eval_batch(q + 1, xs)
        rhs = xs * hermite_eval_batch(q, xs) - q * hermite_eval_batch(q - 1, xs)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_orthogonality_under_gaussian_quadrature():
    for p in range(9):
        for q in range(9):
            value = gaussian_expectation(lambda z: hermite_eval_batch(p, z) * hermite_eval_batch(q, z))
            expected = math.factorial(q) if p == q else 0.0
            assert value == pytest.approx(expected, abs=1e-8)


def test_parity():
    xs = np.linspace(-5.0, 5.0, 41)
    for q in range(10):
        np.testing.assert_allclose(hermite_eval_batch(q, -xs), (-1) ** q * hermite_eval_batch(q, xs))


def test_derivative_identity():
    assert hermite_derivative(3, 2.0) == pytest.approx(3 * hermite_eval(2, 2.0))
    assert hermite_derivative(0, 1.5) == 0.0
    np.testing.assert_allclose(hermite_derivative(4, np.array([0.0, 1.0])), [0.0, -8.0])


def test_negative_degree_is_rejected():
    with pytest.raises(DomainError):
        hermite_eval(-1, 0.0)
