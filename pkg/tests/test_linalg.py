"""Tests for tools/linalg.py and tools/quadrature.py — matrix roots and Gauss-Hermite rules."""
from __future__ import annotations

import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from unittest.mock import patch

import numpy as np
import pytest

import config
from tools.linalg import SingularQError, psd_sqrt, sign_normalize_columns, sqrt_pair
from tools.quadrature import (
    QuadratureDimensionError,
    QuadratureOrderTooLowError,
    gauss_hermite_rule,
    gaussian_expectation,
    refine_expectation,
    tensor_rule,
)


class TestRoots:
    def test_psd_sqrt_squares_back(self):
        rng = np.random.default_rng(1)
        b = rng.standard_normal((4, 4))
        m = b @ b.T
        r = psd_sqrt(m)
        np.testing.assert_allclose(r @ r, m, atol=1e-12)
        np.testing.assert_allclose(r, r.T)

    def test_psd_sqrt_clips_tiny_negatives(self):
        m = np.array([[1.0, 0.0], [0.0, -1e-18]])
        assert np.all(np.isfinite(psd_sqrt(m)))

    def test_sqrt_pair_inverse(self):
        m = np.array([[2.0, 0.5], [0.5, 1.0]])
        r, ri = sqrt_pair(m)
        np.testing.assert_allclose(r @ ri, np.eye(2), atol=1e-14)

    def test_sqrt_pair_diagonal_exact(self):
        r, ri = sqrt_pair(np.diag([4.0, 9.0]))
        np.testing.assert_array_equal(r, np.diag([2.0, 3.0]))
        np.testing.assert_array_equal(ri, np.diag([0.5, 1.0 / 3.0]))

    def test_sqrt_pair_singular_diagonal(self):
        with pytest.raises(SingularQError):
            sqrt_pair(np.diag([1.0, 0.0]))

    def test_sqrt_pair_singular_dense(self):
        m = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(SingularQError, match="singular"):
            sqrt_pair(m, name="Q_∞")

    def test_singular_is_arithmetic_error(self):
        assert issubclass(SingularQError, ArithmeticError)

    def test_sign_normalization(self):
        v = np.array([[-1.0, 0.0], [0.0, -1.0]])
        np.testing.assert_array_equal(sign_normalize_columns(v), np.eye(2))


class TestGaussHermite:
    """Probabilists' rule normalized to N(0, 1)."""

    def test_weights_sum_to_one(self):
        _, w = gauss_hermite_rule(12)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("k,expected", [(2, 1.0), (4, 3.0), (6, 15.0), (8, 105.0)])
    def test_even_moments(self, k, expected):
        x, w = gauss_hermite_rule(10)
        assert float(w @ x ** k) == pytest.approx(expected, rel=1e-12)

    def test_tensor_rule_shape(self):
        nodes, weights = tensor_rule(3, 5)
        assert nodes.shape == (125, 3)
        assert weights.sum() == pytest.approx(1.0)

    def test_tensor_rule_refuses_high_dimension(self):
        with pytest.raises(QuadratureDimensionError):
            tensor_rule(config.GH_MAX_DIM + 1, 4)

    def test_gaussian_covariance(self):
        cov = np.array([[2.0, 0.3], [0.3, 0.5]])
        mean = np.array([1.0, -1.0])
        value = gaussian_expectation(lambda p: p[:, 0] * p[:, 1], mean, cov, n_nodes=4)
        assert value == pytest.approx(0.3 + mean[0] * mean[1], rel=1e-12)

    def test_degenerate_covariance(self):
        cov = np.diag([1.0, 0.0])
        value = gaussian_expectation(lambda p: p[:, 0] ** 2 + p[:, 1], np.array([0.0, 2.0]), cov, n_nodes=4)
        assert value == pytest.approx(3.0, rel=1e-12)

    def test_point_mass(self):
        value = gaussian_expectation(lambda p: p[:, 0] ** 3, np.array([2.0]), np.zeros((1, 1)))
        assert value == pytest.approx(8.0)

    def test_order_too_low(self):
        with pytest.raises(QuadratureOrderTooLowError):
            gaussian_expectation(lambda p: p[:, 0], np.zeros(1), np.eye(1), n_nodes=2, degree=4)

    def test_refine_converges_on_smooth_integrand(self):
        result = refine_expectation(lambda p: np.cos(p[:, 0]), np.zeros(1), np.eye(1), n_start=10)
        assert result.converged
        assert result.value == pytest.approx(math.exp(-0.5), abs=1e-10)

    def test_ram_guard(self):
        with patch("tools.quadrature._ram_below_threshold", return_value=False):
            with pytest.raises(MemoryError):
                tensor_rule(2, 4)
