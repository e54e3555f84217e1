"""Tests for tools/model.py — document loading, validation and the standing hypothesis."""
from __future__ import annotations

import json
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import numpy as np
import pytest

from tools.model import (
    ModelSchemaError,
    NonSymmetricQError,
    NotPSDError,
    OUModel,
    load_model,
    validate_hypothesis,
    van_loan_gramian,
)


# ── Test fixtures ────────────────────────────────────────────────────

_DENSE = {"kind": "dense", "A": [[-1.0, 0.5], [0.25, -2.0]], "Q": [[1.0, 0.0], [0.0, 0.5]]}


class TestLoadModel:
    """Dense, diagonal and text/path inputs."""

    def test_dense_dict(self):
        m = load_model(_DENSE, name="pair")
        assert m.dim == 2
        assert m.kind == "dense"
        assert m.name == "pair"
        np.testing.assert_array_equal(m.a, np.array(_DENSE["A"]))

    def test_json_text(self):
        m = load_model(json.dumps(_DENSE))
        assert m.digest == load_model(_DENSE).digest

    def test_path_uses_stem_as_name(self, tmp_path):
        path = tmp_path / "two_by_two.json"
        path.write_text(json.dumps(_DENSE), encoding="utf-8")
        m = load_model(path)
        assert m.name == "two_by_two"

    def test_arrays_are_read_only(self):
        m = load_model(_DENSE)
        with pytest.raises(ValueError):
            m.a[0, 0] = 5.0

    def test_digest_ignores_name(self):
        assert load_model(_DENSE, name="a").digest == load_model(_DENSE, name="b").digest

    def test_digest_changes_with_entries(self):
        other = {**_DENSE, "A": [[-1.0, 0.5], [0.25, -3.0]]}
        assert load_model(other).digest != load_model(_DENSE).digest

    def test_diagonal_formula(self):
        m = load_model({"kind": "diagonal", "N": 4, "alpha_k": "-1/k", "q_k": "k**(-3)"})
        np.testing.assert_allclose(np.diagonal(m.a), [-1.0, -0.5, -1 / 3, -0.25])
        np.testing.assert_allclose(np.diagonal(m.q), [1.0, 1 / 8, 1 / 27, 1 / 64])
        assert m.is_diagonal
        assert m.params["N"] == 4

    def test_diagonal_lists(self):
        m = load_model({"kind": "diagonal", "alpha": [-1, -2, -3], "q": [1, 1, 1]})
        assert m.dim == 3

    def test_semigroup_diagonal_closed_form(self):
        m = load_model({"kind": "diagonal", "alpha": [-1, -2], "q": [1, 1]})
        np.testing.assert_allclose(m.semigroup(0.5), np.diag([math.exp(-0.5), math.exp(-1.0)]))


class TestModelErrors:
    """Schema and positivity violations raise typed errors."""

    def test_non_square(self):
        with pytest.raises(ModelSchemaError):
            load_model({"A": [[-1.0, 0.0]], "Q": [[1.0, 0.0]]})

    def test_shape_mismatch(self):
        with pytest.raises(ModelSchemaError):
            load_model({"A": [[-1.0]], "Q": [[1.0, 0.0], [0.0, 1.0]]})

    def test_nonsymmetric_q(self):
        with pytest.raises(NonSymmetricQError):
            load_model({"A": [[-1.0, 0.0], [0.0, -1.0]], "Q": [[1.0, 0.3], [0.0, 1.0]]})

    def test_indefinite_q(self):
        with pytest.raises(NotPSDError):
            load_model({"A": [[-1.0, 0.0], [0.0, -1.0]], "Q": [[1.0, 0.0], [0.0, -0.1]]})

    def test_unknown_kind(self):
        with pytest.raises(ModelSchemaError, match="unknown kind"):
            load_model({"kind": "sparse", "A": [[-1.0]], "Q": [[1.0]]})

    def test_invalid_json(self):
        with pytest.raises(ModelSchemaError):
            load_model("{not json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "absent.json")

    def test_non_negative_alpha(self):
        with pytest.raises(ModelSchemaError):
            load_model({"kind": "diagonal", "alpha": [-1, 0], "q": [1, 1]})

    def test_bad_formula(self):
        with pytest.raises(ModelSchemaError):
            load_model({"kind": "diagonal", "N": 3, "alpha_k": "-1/j", "q_k": "1"})

    def test_formula_without_truncation(self):
        with pytest.raises(ModelSchemaError):
            load_model({"kind": "diagonal", "alpha_k": "-1/k", "q": [1, 1]})

    def test_schema_errors_are_value_errors(self):
        assert issubclass(ModelSchemaError, ValueError)
        assert issubclass(NotPSDError, ValueError)


class TestHypothesis:
    """Finite trace integral and injective Q_∞."""

    def test_hurwitz_reversible_holds(self):
        verdict = validate_hypothesis(load_model(_DENSE))
        assert verdict.holds
        assert verdict.hurwitz
        assert verdict.method == "lyapunov"

    def test_diagonal_uses_closed_form(self):
        m = load_model({"kind": "diagonal", "N": 8, "alpha_k": "-1/k", "q_k": "k**(-3)"})
        verdict = validate_hypothesis(m)
        assert verdict.holds
        assert verdict.method == "closed-form"
        expected = sum(k ** -3 / (2.0 / k) for k in range(1, 9))
        assert verdict.trace_integral == pytest.approx(expected, rel=1e-12)

    def test_nonsymmetric_hurwitz_holds(self):
        m = load_model({"A": [[-1.0, 2.0], [0.0, -1.0]], "Q": [[1.0, 0.0], [0.0, 1.0]]})
        assert validate_hypothesis(m).holds

    def test_zero_drift_diverges(self):
        m = OUModel(a=np.zeros((2, 2)), q=np.eye(2))
        verdict = validate_hypothesis(m)
        assert not verdict.holds
        assert verdict.method == "doubling-grid"
        assert math.isinf(verdict.trace_integral)

    def test_uncontrollable_q_fails_injectivity(self):
        m = OUModel(a=np.diag([-1.0, -2.0]), q=np.diag([1.0, 0.0]))
        verdict = validate_hypothesis(m)
        assert not verdict.holds
        assert verdict.qinf_min_eig == 0.0

    def test_to_dict_keys(self):
        d = validate_hypothesis(load_model(_DENSE)).to_dict()
        assert {"holds", "trace_integral", "qinf_min_eig", "hurwitz", "method", "note"} <= set(d)


class TestVanLoan:
    @pytest.mark.parametrize("t", [0.01, 0.5, 2.0])
    def test_scalar_closed_form(self, t):
        q_t = van_loan_gramian(np.array([[-1.0]]), np.array([[1.0]]), t)
        assert q_t[0, 0] == pytest.approx(-math.expm1(-2 * t) / 2, rel=1e-12)
