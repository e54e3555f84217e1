"""Tests for tools/mehler.py — R_t by quadrature and Monte Carlo, gradient bounds, LSI and Kolmogorov."""
from __future__ import annotations

import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import numpy as np
import pytest

import config
from tools.chaos import apply_Rt_spectral, expand
from tools.gramian import build_gramians
from tools.model import OUModel
from tools.mehler import (
    CylindricalObservable,
    SingularQtError,
    TransitionKernel,
    chapman_kolmogorov_residual,
    check_gradient_bound,
    check_hypercontractivity_lsi,
    clipped_coordinate,
    critical_exponent,
    evaluate_Rt,
    gradient_matrix_norm,
    invariance_residual,
    kolmogorov_residual,
)
from tools.polynomial import PolynomialObservable
from tools.quadrature import QuadratureDimensionError, QuadratureOrderTooLowError
from tools.symmetry import build_operator_bundle


# ── Test fixtures ────────────────────────────────────────────────────

_PAIR = OUModel(a=np.array([[-1.0, 0.5], [0.25, -2.0]]), q=np.diag([1.0, 0.5]))
_CONTROL = OUModel(a=np.array([[-1.0, 2.0], [0.0, -1.0]]), q=np.eye(2))
_Q3 = np.diag([1.0, 0.5, 2.0])
_TRIPLE = OUModel(
    a=-np.array([[2.0, 0.3, 0.0], [0.3, 1.5, 0.2], [0.0, 0.2, 1.0]]) @ np.linalg.inv(_Q3), q=_Q3,
)


def _random_reversible(rng: np.random.Generator, d: int) -> OUModel:
    """A = −S Q⁻¹ with S, Q symmetric positive definite."""
    b = rng.standard_normal((d, d))
    c = rng.standard_normal((d, d))
    q = b @ b.T / d + 0.5 * np.eye(d)
    s = c @ c.T / d + 0.5 * np.eye(d)
    return OUModel(a=-s @ np.linalg.inv(q), q=q)


@pytest.fixture(scope="module")
def pair():
    g = build_gramians(_PAIR)
    return g, build_operator_bundle(_PAIR, g)


class TestEvaluateRt:
    def test_quadrature_matches_spectral(self, pair):
        """50 random polynomials of degree ≤ 4 agree with the chaos path."""
        g, b = pair
        rng = np.random.default_rng(42)
        for _ in range(50):
            phi = PolynomialObservable.random(2, int(rng.integers(1, 5)), rng)
            x = rng.standard_normal(2)
            t = float(rng.uniform(0.05, 3.0))
            quad = evaluate_Rt(_PAIR, g, phi, x, t).value
            spectral = float(apply_Rt_spectral(expand(phi, b, g), b, t)(x[None, :])[0])
            assert abs(quad - spectral) <= 1e-8 * max(1.0, abs(spectral))

    def test_nonsymmetric_linear_closed_form(self):
        phi = PolynomialObservable.linear(np.array([1.0, 2.0]))
        x = np.array([0.5, -1.0])
        value = evaluate_Rt(_CONTROL, None, phi, x, 0.7).value
        assert value == pytest.approx(float(np.array([1.0, 2.0]) @ _CONTROL.semigroup(0.7) @ x), rel=1e-12)

    def test_quadratic_adds_covariance(self):
        g = build_gramians(_CONTROL, [1.3])
        phi = PolynomialObservable.from_dict(2, {(2, 0): 1.0})
        x = np.array([1.0, 1.0])
        mean = _CONTROL.semigroup(1.3) @ x
        expected = mean[0] ** 2 + g.at(1.3)[0, 0]
        assert evaluate_Rt(_CONTROL, g, phi, x, 1.3).value == pytest.approx(expected, rel=1e-12)

    def test_monte_carlo_within_stderr(self, pair):
        g, b = pair
        phi = PolynomialObservable.from_dict(2, {(2, 0): 1.0, (0, 1): -1.0})
        x = np.array([0.3, 0.8])
        exact = evaluate_Rt(_PAIR, g, phi, x, 0.5).value
        est = evaluate_Rt(_PAIR, g, phi, x, 0.5, method="monte-carlo", samples=100_000, seed=3)
        assert est.stderr > 0
        assert abs(est.value - exact) <= config.MC_Z_THRESHOLD * est.stderr

    def test_monte_carlo_reproducible(self, pair):
        g, _ = pair
        phi = PolynomialObservable.coordinate(2, 0)
        a = evaluate_Rt(_PAIR, g, phi, np.ones(2), 1.0, method="monte-carlo", samples=5000, seed=11)
        b = evaluate_Rt(_PAIR, g, phi, np.ones(2), 1.0, method="monte-carlo", samples=5000, seed=11)
        assert a.value == b.value

    def test_unknown_method(self, pair):
        g, _ = pair
        with pytest.raises(ValueError, match="unknown method"):
            evaluate_Rt(_PAIR, g, PolynomialObservable.coordinate(2, 0), np.ones(2), 1.0, method="euler")

    def test_order_too_low(self, pair):
        g, _ = pair
        phi = PolynomialObservable.from_dict(2, {(5, 0): 1.0})
        with pytest.raises(QuadratureOrderTooLowError):
            evaluate_Rt(_PAIR, g, phi, np.ones(2), 1.0, n_nodes=2)

    def test_without_invariant_measure(self):
        m = OUModel(a=np.array([[0.0]]), q=np.array([[1.0]]))
        phi = PolynomialObservable.from_dict(1, {(2,): 1.0})
        value = evaluate_Rt(m, None, phi, np.array([0.5]), 0.7).value
        assert value == pytest.approx(0.25 + 0.7, rel=1e-12)

    def test_tensor_rule_refused_in_high_dimension(self):
        m = OUModel(a=-np.eye(5), q=np.eye(5), kind="diagonal")
        with pytest.raises(QuadratureDimensionError):
            evaluate_Rt(m, None, PolynomialObservable.coordinate(5, 0), np.zeros(5), 1.0)

    def test_cylindrical_in_high_dimension(self):
        m = OUModel(a=-np.diag(np.arange(1.0, 7.0)), q=np.eye(6), kind="diagonal")
        p = np.zeros((6, 1))
        p[2, 0] = 1.0
        phi = CylindricalObservable(p, lambda z: z[..., 0] ** 2, degree=2)
        x = np.ones(6)
        t = 0.4
        expected = math.exp(-2 * 3 * t) + (1 - math.exp(-2 * 3 * t)) / 6
        assert evaluate_Rt(m, None, phi, x, t).value == pytest.approx(expected, rel=1e-12)

    def test_zero_time_is_identity(self, pair):
        g, _ = pair
        phi = PolynomialObservable.from_dict(2, {(1, 1): 2.0})
        x = np.array([0.5, 3.0])
        assert evaluate_Rt(_PAIR, g, phi, x, 0.0).value == pytest.approx(3.0)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            TransitionKernel.from_model(_PAIR, None, -1.0)


class TestSemigroupIdentities:
    def test_invariance(self, pair):
        g, _ = pair
        phi = PolynomialObservable.random(2, 4, np.random.default_rng(1))
        assert invariance_residual(_PAIR, g, phi, 0.8, n_nodes=8) <= 1e-10

    def test_invariance_nonsymmetric(self):
        g = build_gramians(_CONTROL)
        phi = PolynomialObservable.random(2, 3, np.random.default_rng(2))
        assert invariance_residual(_CONTROL, g, phi, 1.5, n_nodes=8) <= 1e-10

    def test_chapman_kolmogorov(self, pair):
        g, _ = pair
        phi = PolynomialObservable.random(2, 3, np.random.default_rng(3))
        x = np.random.default_rng(4).standard_normal((5, 2))
        assert chapman_kolmogorov_residual(_PAIR, g, phi, 0.3, 0.6, x, n_nodes=6) <= 1e-10


class TestGradientBound:
    def test_matrix_norm_bound(self, pair):
        g, b = pair
        for t in np.geomspace(0.01, 10.0, 10) / b.gap:
            assert gradient_matrix_norm(_PAIR, g, b, float(t)) * math.sqrt(t) <= 1.0 + 1e-12

    def test_random_symmetric_models(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            m = _random_reversible(rng, int(rng.integers(2, 5)))
            g = build_gramians(m)
            b = build_operator_bundle(m, g)
            for t in np.geomspace(0.01, 10.0, 10) / b.gap:
                assert gradient_matrix_norm(m, g, b, float(t)) * math.sqrt(t) <= 1.0 + 1e-12

    def test_too_small_time(self, pair):
        g, b = pair
        with pytest.raises(SingularQtError):
            gradient_matrix_norm(_PAIR, g, b, 1e-12)

    def test_sampled_bound_for_clipped_coordinate(self, pair):
        g, b = pair
        report = check_gradient_bound(_PAIR, g, b, clipped_coordinate(2, 0), [0.5, 1.0, 2.0], seed=5)
        assert report.matrix_violations == 0
        assert report.sampled_violations == 0
        assert report.passed
        assert set(report.to_dict()["matrix_values"]) == {"0.5", "1", "2"}

    def test_unbounded_observable_rejected(self, pair):
        g, b = pair
        with pytest.raises(ValueError, match="sup norm"):
            check_gradient_bound(_PAIR, g, b, PolynomialObservable.coordinate(2, 0), [1.0])


class TestHypercontractivity:
    def test_critical_exponent(self):
        assert critical_exponent(2.0, 1.0, 0.0) == pytest.approx(2.0)
        assert critical_exponent(2.0, 0.5, 1.0) == pytest.approx(1.0 + math.e)

    def test_margins_nonnegative(self, pair):
        g, b = pair
        phi = PolynomialObservable.from_dict(2, {(0, 0): 1.0, (2, 0): 1.0, (0, 2): 0.5})
        report = check_hypercontractivity_lsi(_PAIR, g, b, phi, 2.0, 0.5 / b.gap)
        assert report.converged
        assert report.hypercontractivity_margin >= -1e-8
        assert report.lsi_margin >= -1e-8
        assert report.lsi_margin_weak >= report.lsi_margin

    def test_random_observables(self, pair):
        g, b = pair
        rng = np.random.default_rng(31)
        for _ in range(20):
            phi = PolynomialObservable.random(2, int(rng.integers(1, 5)), rng)
            report = check_hypercontractivity_lsi(_PAIR, g, b, phi, 2.0, 0.5 / b.gap)
            assert report.hypercontractivity_margin >= -1e-8
            assert report.lsi_margin >= -1e-9

    def test_constant_saturates_lsi(self, pair):
        g, b = pair
        report = check_hypercontractivity_lsi(_PAIR, g, b, PolynomialObservable.constant(2, 2.0), 2.0, 0.3)
        assert report.entropy == pytest.approx(0.0, abs=1e-10)
        assert report.dirichlet == 0.0

    def test_invalid_exponent(self, pair):
        g, b = pair
        with pytest.raises(ValueError):
            check_hypercontractivity_lsi(_PAIR, g, b, PolynomialObservable.constant(2), 1.0, 0.3)


class TestKolmogorov:
    @pytest.mark.parametrize("m", [_PAIR, _TRIPLE], ids=["d2", "d3"])
    @pytest.mark.parametrize("t", [0.1, 1.0])
    def test_residuals(self, m, t):
        g = build_gramians(m)
        b = build_operator_bundle(m, g)
        rng = np.random.default_rng(17)
        for _ in range(20):
            phi = PolynomialObservable.random(m.dim, int(rng.integers(1, 5)), rng)
            points = rng.standard_normal((20, m.dim)) @ b.qinf_half
            report = kolmogorov_residual(m, g, b, phi, t, points)
            assert report.residual <= 1e-8
            assert report.residual_conjugated <= 1e-8
            assert report.form_agreement <= 1e-9
            assert report.residual_relative <= report.residual

    def test_requires_positive_time(self, pair):
        g, b = pair
        with pytest.raises(ValueError):
            kolmogorov_residual(_PAIR, g, b, PolynomialObservable.coordinate(2, 0), 0.0, np.zeros((1, 2)))
