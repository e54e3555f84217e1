"""Polynomial observables: the cylinder test-function class on ℝ^d.

Terms are stored as (coefficient, powers) pairs. Algebra (derivatives,
products, linear substitution, the OU generator) goes through sympy ``Poly``;
evaluation is vectorized numpy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy

import config

logger = logging.getLogger(__name__)


class ObservableSchemaError(ValueError):
    """Observable document does not match the expected schema."""


class DegreeCapError(ValueError):
    """Observable degree exceeds the configured cap."""


def _gens(dim: int) -> tuple[sympy.Symbol, ...]:
    return sympy.symbols(f"x0:{dim}", real=True) if dim > 1 else (sympy.Symbol("x0", real=True),)


@dataclass(frozen=True)
class PolynomialObservable:
    """φ(x) = Σ c · x^p with finitely many terms."""

    dim: int
    terms: tuple[tuple[float, tuple[int, ...]], ...]

    # ── Construction ─────────────────────────────────────────────────

    @classmethod
    def from_dict(cls, dim: int, rep: dict[tuple[int, ...], float]) -> "PolynomialObservable":
        terms = tuple(
            (float(c), tuple(int(e) for e in p))
            for p, c in sorted(rep.items())
            if float(c) != 0.0
        )
        return cls(dim=dim, terms=terms)

    @classmethod
    def from_poly(cls, poly: sympy.Poly, dim: int) -> "PolynomialObservable":
        rep = {tuple(p): float(c) for p, c in poly.as_dict().items()}
        return cls.from_dict(dim, rep)

    @classmethod
    def constant(cls, dim: int, value: float = 1.0) -> "PolynomialObservable":
        return cls.from_dict(dim, {(0,) * dim: value})

    @classmethod
    def coordinate(cls, dim: int, index: int, coeff: float = 1.0) -> "PolynomialObservable":
        p = [0] * dim
        p[index] = 1
        return cls.from_dict(dim, {tuple(p): coeff})

    @classmethod
    def linear(cls, weights: np.ndarray) -> "PolynomialObservable":
        """φ(x) = ⟨w, x⟩."""
        w = np.asarray(weights, dtype=float)
        dim = w.size
        rep = {}
        for i, wi in enumerate(w):
            p = [0] * dim
            p[i] = 1
            rep[tuple(p)] = float(wi)
        return cls.from_dict(dim, rep)

    @classmethod
    def from_document(cls, doc: dict, dim: int | None = None) -> "PolynomialObservable":
        """Parse ``{"degree": D, "terms": [{"c": real, "p": [ints]}]}``."""
        if not isinstance(doc, dict) or "terms" not in doc:
            raise ObservableSchemaError("observable document needs a 'terms' list")
        terms = doc["terms"]
        if not isinstance(terms, list) or not terms:
            raise ObservableSchemaError("'terms' must be a non-empty list")
        rep: dict[tuple[int, ...], float] = {}
        for i, term in enumerate(terms):
            try:
                c = float(term["c"])
                p = tuple(int(e) for e in term["p"])
            except (KeyError, TypeError, ValueError) as e:
                raise ObservableSchemaError(f"term {i} malformed: {e}") from e
            if any(e < 0 for e in p):
                raise ObservableSchemaError(f"term {i} has a negative power")
            if dim is None:
                dim = len(p)
            if len(p) != dim:
                raise ObservableSchemaError(f"term {i} has {len(p)} powers, expected {dim}")
            rep[p] = rep.get(p, 0.0) + c
        obs = cls.from_dict(dim, rep)
        declared = doc.get("degree")
        if declared is not None and obs.degree > int(declared):
            raise ObservableSchemaError(f"declared degree {declared} < actual degree {obs.degree}")
        if obs.degree > config.DEGREE_CAP:
            raise DegreeCapError(f"degree {obs.degree} exceeds cap {config.DEGREE_CAP}")
        return obs

    @classmethod
    def random(
        cls,
        dim: int,
        degree: int,
        rng: np.random.Generator,
        n_terms: int | None = None,
    ) -> "PolynomialObservable":
        """Random polynomial of total degree ≤ ``degree`` with N(0,1) coefficients."""
        if n_terms is None:
            n_terms = 2 * degree + dim + 1
        rep: dict[tuple[int, ...], float] = {}
        top = [0] * dim
        top[int(rng.integers(dim))] = degree
        rep[tuple(top)] = float(rng.standard_normal())
        for _ in range(n_terms - 1):
            total = int(rng.integers(0, degree + 1))
            p = [0] * dim
            for _ in range(total):
                p[int(rng.integers(dim))] += 1
            key = tuple(p)
            rep[key] = rep.get(key, 0.0) + float(rng.standard_normal())
        return cls.from_dict(dim, rep)

    def to_document(self) -> dict:
        return {
            "degree": self.degree,
            "terms": [{"c": c, "p": list(p)} for c, p in self.terms],
        }

    # ── Structure ────────────────────────────────────────────────────

    @property
    def degree(self) -> int:
        return max((sum(p) for _, p in self.terms), default=0)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @cached_property
    def _powers(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, self.dim), dtype=int)
        return np.array([p for _, p in self.terms], dtype=int)

    @cached_property
    def _coeffs(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms], dtype=float)

    @cached_property
    def gens(self) -> tuple[sympy.Symbol, ...]:
        return _gens(self.dim)

    def to_poly(self) -> sympy.Poly:
        rep = {p: sympy.Float(c) for c, p in self.terms} or {(0,) * self.dim: sympy.Float(0)}
        return sympy.Poly.from_dict(rep, *self.gens, domain="RR")

    # ── Evaluation ───────────────────────────────────────────────────

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., d); returns shape (...)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"points have dimension {x.shape[-1]}, observable has {self.dim}")
        if not self.terms:
            return np.zeros(x.shape[:-1])
        monomials = np.prod(x[..., None, :] ** self._powers, axis=-1)
        return monomials @ self._coeffs

    # ── Algebra ──────────────────────────────────────────────────────

    def diff(self, index: int) -> "PolynomialObservable":
        return PolynomialObservable.from_poly(self.to_poly().diff(self.gens[index]), self.dim)

    @cached_property
    def gradient_polys(self) -> tuple["PolynomialObservable", ...]:
        return tuple(self.diff(i) for i in range(self.dim))

    @cached_property
    def hessian_polys(self) -> tuple[tuple["PolynomialObservable", ...], ...]:
        grads = self.gradient_polys
        return tuple(tuple(grads[i].diff(j) for j in range(self.dim)) for i in range(self.dim))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """∇φ at points (..., d) → (..., d)."""
        return np.stack([g(x) for g in self.gradient_polys], axis=-1)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """D²φ at points (..., d) → (..., d, d)."""
        rows = [np.stack([h(x) for h in row], axis=-1) for row in self.hessian_polys]
        return np.stack(rows, axis=-2)

    def __add__(self, other: "PolynomialObservable") -> "PolynomialObservable":
        return PolynomialObservable.from_poly(self.to_poly() + other.to_poly(), self.dim)

    def __sub__(self, other: "PolynomialObservable") -> "PolynomialObservable":
        return PolynomialObservable.from_poly(self.to_poly() - other.to_poly(), self.dim)

    def __mul__(self, other: "PolynomialObservable") -> "PolynomialObservable":
        return PolynomialObservable.from_poly(self.to_poly() * other.to_poly(), self.dim)

    def scale(self, factor: float) -> "PolynomialObservable":
        return PolynomialObservable.from_dict(self.dim, {p: factor * c for c, p in self.terms})

    def substitute_linear(self, m: np.ndarray) -> "PolynomialObservable":
        """Return y ↦ φ(M y) as a polynomial in y."""
        m = np.asarray(m, dtype=float)
        gens = self.gens
        images = [sum(sympy.Float(m[i, j]) * gens[j] for j in range(self.dim)) for i in range(self.dim)]
        expr = self.to_poly().as_expr().subs(dict(zip(gens, images)), simultaneous=True)
        return PolynomialObservable.from_poly(sympy.Poly(sympy.expand(expr), *gens, domain="RR"), self.dim)


def ou_generator(phi: PolynomialObservable, a: np.ndarray, q: np.ndarray) -> PolynomialObservable:
    """Apply Lφ = ½ tr(Q D²φ) + ⟨Ax, Dφ⟩ symbolically."""
    d = phi.dim
    gens = phi.gens
    poly = phi.to_poly()
    grads = [poly.diff(g) for g in gens]
    out = sympy.Poly(0, *gens, domain="RR")
    for i in range(d):
        drift_i = sympy.Poly(sum(sympy.Float(a[i, j]) * gens[j] for j in range(d)) or 0, *gens, domain="RR")
        out += drift_i * grads[i]
        for j in range(d):
            if q[i, j] != 0.0:
                out += grads[i].diff(gens[j]) * sympy.Float(0.5 * q[i, j])
    return PolynomialObservable.from_poly(out, d)
