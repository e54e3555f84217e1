"""Tests for tools/gramian.py — Lyapunov solves, finite-time Gramians and their properties."""
from __future__ import annotations

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import numpy as np
import pytest

from tools.gramian import (
    NoUniqueSolutionError,
    build_gramians,
    convergence_violation,
    eigenvalue_table,
    finite_time_gramian,
    identity_residual,
    is_reversible,
    kernel_inclusion_residual,
    lyapunov_residual,
    monotonicity_margin,
    quadrature_gramian,
    solve_lyapunov,
    symmetric_lyapunov_residual,
)
from tools.model import OUModel


# ── Test fixtures ────────────────────────────────────────────────────


def _random_hurwitz(rng: np.random.Generator, d: int) -> OUModel:
    """A − (margin)I shifted so every eigenvalue has real part ≤ −0.1."""
    a = rng.standard_normal((d, d))
    shift = np.max(np.linalg.eigvals(a).real) + 0.1 + rng.uniform(0, 1)
    b = rng.standard_normal((d, d))
    return OUModel(a=a - shift * np.eye(d), q=b @ b.T + 0.1 * np.eye(d))


def _random_reversible(rng: np.random.Generator, d: int) -> OUModel:
    """A = −S Q⁻¹ with S, Q symmetric positive definite, so AQ = −S."""
    b = rng.standard_normal((d, d))
    c = rng.standard_normal((d, d))
    q = b @ b.T + 0.5 * np.eye(d)
    s = c @ c.T + 0.5 * np.eye(d)
    return OUModel(a=-s @ np.linalg.inv(q), q=q)


_PAIR = OUModel(a=np.array([[-1.0, 0.5], [0.25, -2.0]]), q=np.diag([1.0, 0.5]))


class TestLyapunov:
    def test_random_models_residual(self):
        """100 Hurwitz models of dimension 2..8 solve to relative residual 1e-10."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            m = _random_hurwitz(rng, int(rng.integers(2, 9)))
            q_inf = solve_lyapunov(m)
            assert lyapunov_residual(m, q_inf) <= 1e-10
            np.testing.assert_array_equal(q_inf, q_inf.T)

    def test_random_reversible_closed_form(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            m = _random_reversible(rng, int(rng.integers(2, 7)))
            assert is_reversible(m)
            q_inf = solve_lyapunov(m)
            assert symmetric_lyapunov_residual(m, q_inf) <= 1e-10
            assert lyapunov_residual(m, q_inf) <= 1e-10

    def test_diagonal_closed_form(self):
        m = OUModel(a=np.diag([-1.0, -0.5]), q=np.diag([1.0, 0.125]), kind="diagonal")
        np.testing.assert_array_equal(solve_lyapunov(m), np.diag([0.5, 0.125]))

    def test_half_a_squared_example(self):
        alpha = -1.0 / np.arange(1, 9)
        m = OUModel(a=np.diag(alpha), q=np.diag(np.arange(1, 9) ** -3.0), kind="diagonal")
        np.testing.assert_allclose(solve_lyapunov(m), 0.5 * m.a @ m.a, rtol=1e-15)

    def test_no_unique_solution(self):
        m = OUModel(a=np.diag([1.0, -1.0]), q=np.eye(2))
        with pytest.raises(NoUniqueSolutionError):
            solve_lyapunov(m)

    def test_nonunique_is_arithmetic_error(self):
        assert issubclass(NoUniqueSolutionError, ArithmeticError)


class TestFiniteTime:
    """Q_t through Q_∞ − SQ_∞S*, Van Loan and quadrature."""

    @pytest.mark.parametrize("t", [0.01, 0.3, 1.0, 5.0])
    def test_matches_quadrature(self, t):
        direct = quadrature_gramian(_PAIR, t)
        np.testing.assert_allclose(finite_time_gramian(_PAIR, t), direct, atol=1e-10)

    def test_zero_time(self):
        np.testing.assert_array_equal(finite_time_gramian(_PAIR, 0.0), np.zeros((2, 2)))

    def test_negative_time(self):
        with pytest.raises(ValueError):
            finite_time_gramian(_PAIR, -1.0)

    def test_non_hurwitz_uses_quadrature(self):
        m = OUModel(a=np.array([[0.0, 1.0], [0.0, 0.0]]), q=np.eye(2))
        q_t = finite_time_gramian(m, 2.0)
        # ∫₀² [[1+s², s], [s, 1]] ds
        np.testing.assert_allclose(q_t, [[2 + 8 / 3, 2.0], [2.0, 2.0]], rtol=1e-9)

    @pytest.mark.parametrize("t", [0.1, 1.0, 3.0])
    def test_zero_rate_is_linear_in_t(self, t):
        m = OUModel(a=np.array([[0.0]]), q=np.array([[1.0]]))
        np.testing.assert_array_equal(finite_time_gramian(m, t), [[t]])

    def test_unstable_diagonal_matches_quadrature(self):
        m = OUModel(a=np.diag([0.5, 0.0, -1.0]), q=np.diag([1.0, 2.0, 0.5]))
        q_t = finite_time_gramian(m, 1.0)
        assert np.all(np.isfinite(q_t))
        np.testing.assert_allclose(q_t, quadrature_gramian(m, 1.0), rtol=1e-9)
        assert q_t[0, 0] == pytest.approx(np.expm1(1.0))

    def test_at_falls_back_off_grid(self):
        g = build_gramians(_PAIR, [1.0])
        np.testing.assert_allclose(g.at(0.7), finite_time_gramian(_PAIR, 0.7, g.q_inf))


class TestGramianProperties:
    def test_identity_residual(self):
        g = build_gramians(_PAIR)
        assert identity_residual(g) <= 1e-9

    def test_monotone_and_convergent(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            g = build_gramians(_random_hurwitz(rng, 4))
            assert monotonicity_margin(g) >= -1e-10
            assert convergence_violation(g) <= 1e-10

    def test_kernel_inclusion(self):
        m = OUModel(a=np.diag([-1.0, -2.0]), q=np.diag([1.0, 0.0]))
        g = build_gramians(m)
        assert kernel_inclusion_residual(g) == 0.0

    def test_eigenvalue_table(self):
        g = build_gramians(_PAIR)
        frame = eigenvalue_table(g, [0.5, 1.0, 2.0])
        assert list(frame.columns) == ["t", "lambda_1", "lambda_2"]
        assert len(frame) == 3
        assert np.all(np.diff(frame["lambda_2"].to_numpy()) > 0)

    def test_default_grid_stored(self):
        g = build_gramians(_PAIR)
        assert len(g.times) == 4
        assert g.lyapunov_residual <= 1e-10
