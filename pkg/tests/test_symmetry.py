"""Tests for tools/symmetry.py — reversibility criteria, the 2×2 classifier and the operator bundle."""
from __future__ import annotations

import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import numpy as np
import pytest

from tools.gramian import build_gramians, finite_time_gramian
from tools.linalg import SingularQError
from tools.model import OUModel
from tools.symmetry import (
    NotSymmetricError,
    build_operator_bundle,
    cameron_martin_residual,
    check_reversibility,
    classify_2x2,
    contraction_sharpness,
    materialize_2x2,
    range_ratios,
    residual_time_grid,
)


# ── Test fixtures ────────────────────────────────────────────────────

_PAIR = OUModel(a=np.array([[-1.0, 0.5], [0.25, -2.0]]), q=np.diag([1.0, 0.5]))
_CONTROL = OUModel(a=np.array([[-1.0, 2.0], [0.0, -1.0]]), q=np.eye(2))


def _reversible(seed: int, d: int) -> OUModel:
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((d, d))
    c = rng.standard_normal((d, d))
    q = b @ b.T + 0.5 * np.eye(d)
    s = c @ c.T + 0.5 * np.eye(d)
    return OUModel(a=-s @ np.linalg.inv(q), q=q)


class TestReversibility:
    def test_symmetric_pair(self):
        rep = check_reversibility(_PAIR)
        assert rep.is_symmetric
        assert rep.semigroup_verdict
        assert rep.criteria_agree
        assert rep.contraction_margin >= -1e-12

    def test_control_is_not_symmetric(self):
        rep = check_reversibility(_CONTROL)
        assert not rep.is_symmetric
        assert not rep.semigroup_verdict
        assert rep.criteria_agree

    def test_nonsymmetric_contraction_can_fail(self):
        """‖S_Q(t)‖ exceeds one at short times for the Jordan-type drift."""
        m = OUModel(a=np.array([[-1.0, 4.0], [0.0, -1.0]]), q=np.eye(2))
        rep = check_reversibility(m, t_grid=[0.5])
        assert rep.contraction_margin < 0

    def test_to_dict_serializes_times(self):
        d = check_reversibility(_PAIR).to_dict()
        assert all(isinstance(k, str) for k in d["semigroup_residuals"])
        assert d["criteria_agree"] is True

    def test_singular_q_skips_margin(self):
        m = OUModel(a=-np.eye(2), q=np.diag([1.0, 0.0]))
        rep = check_reversibility(m)
        assert rep.is_symmetric
        assert rep.contraction_margin is None

    def test_residual_grid_scales_with_norm(self):
        grid = residual_time_grid(_PAIR)
        assert grid[2] == pytest.approx(1.0 / np.linalg.norm(_PAIR.a, 2))


class TestClassify2x2:
    """Closed form against the matrix criterion on random instances."""

    def test_sweep_agrees_with_matrix_criterion(self):
        rng = np.random.default_rng(2024)
        for i in range(10_000):
            a, b, c = rng.uniform(-2.0, 2.0, size=3)
            q = rng.uniform(0.1, 3.0)
            if abs(q - 1.0) < 1e-3:
                q += 0.01
            d = c * q if i % 2 == 0 else rng.uniform(-2.0, 2.0)
            m = materialize_2x2(a, b, c, d, q)
            hurwitz = bool(np.max(np.linalg.eigvals(m.a).real) < 0)
            expected = check_reversibility(m).is_symmetric and hurwitz
            assert classify_2x2(a, b, c, d, q) == expected, (a, b, c, d, q)

    def test_requires_q_not_one(self):
        with pytest.raises(ValueError):
            classify_2x2(-1.0, -2.0, 0.5, 0.5, 1.0)

    def test_scalar_multiple_of_identity_rejected(self):
        assert classify_2x2(-1.0, -1.0, 0.0, 0.0, 0.5) is False

    def test_pair_classified(self):
        assert classify_2x2(-1.0, -2.0, 0.5, 0.25, 0.5) is True


class TestOperatorBundle:
    def test_bundle_residuals(self):
        g = build_gramians(_PAIR)
        b = build_operator_bundle(_PAIR, g)
        assert b.max_residual <= 1e-9
        assert np.all(np.diff(b.beta) >= 0)
        assert b.gap > 0

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_random_reversible(self, seed):
        m = _reversible(seed, 4)
        g = build_gramians(m)
        b = build_operator_bundle(m, g)
        assert b.max_residual <= 1e-9
        assert contraction_sharpness(b, residual_time_grid(m)) <= 1e-9
        assert cameron_martin_residual(b, g) <= 1e-9

    def test_s_q_spectral_matches(self):
        b = build_operator_bundle(_PAIR, build_gramians(_PAIR))
        np.testing.assert_allclose(b.s_q(0.7), b.s_q_spectral(0.7), atol=1e-12)

    def test_whitening_inverts(self):
        b = build_operator_bundle(_PAIR, build_gramians(_PAIR))
        np.testing.assert_allclose(b.whitening @ b.unwhitening, np.eye(2), atol=1e-12)

    def test_not_symmetric_raises(self):
        with pytest.raises(NotSymmetricError):
            build_operator_bundle(_CONTROL, build_gramians(_CONTROL))

    def test_singular_q_raises(self):
        m = OUModel(a=-np.eye(2), q=np.diag([1.0, 0.0]))
        with pytest.raises(SingularQError):
            build_operator_bundle(m, build_gramians(m))

    def test_diagonal_range_ratios(self):
        n = np.arange(1, 5)
        alpha = -1.0 / n
        qk = n ** -3.0
        m = OUModel(a=np.diag(alpha), q=np.diag(qk), kind="diagonal")
        g = build_gramians(m)
        b = build_operator_bundle(m, g)
        t = 0.8
        expected = np.diagonal(finite_time_gramian(m, t)) * (1 - alpha) / qk
        lo, hi = range_ratios(b, g, t)
        assert lo == pytest.approx(expected.min(), rel=1e-10)
        assert hi == pytest.approx(expected.max(), rel=1e-10)

    def test_gap_of_diagonal(self):
        m = OUModel(a=np.diag([-0.25, -1.0, -3.0]), q=np.eye(3), kind="diagonal")
        b = build_operator_bundle(m, build_gramians(m))
        assert b.gap == pytest.approx(0.25)
        assert math.isclose(contraction_sharpness(b, [0.5, 2.0]), 0.0, abs_tol=1e-14)
