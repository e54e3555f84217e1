"""Hermite (Wick) chaos adapted to μ = N(0, Q_∞).

Coordinates y = Gᵀ Q_∞^{-1/2} x, with G the eigenvectors of A_0, are i.i.d.
standard normal under μ, and the transition semigroup acts on the unit
Hermite product h_n(y) = Π He_{n_i}(y_i)/√(n_i!) by the factor
exp(−t Σ n_i β_i). Everything here is exact coefficient arithmetic on
polynomials of bounded degree.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import pandas as pd
from numpy.polynomial import hermite_e

import config
from tools.gramian import GramianSet
from tools.polynomial import PolynomialObservable
from tools.symmetry import OperatorBundle

logger = logging.getLogger(__name__)

MultiIndex = tuple[int, ...]


class DegreeOverflowError(ValueError):
    """Observable degree exceeds the requested chaos truncation."""


@lru_cache(maxsize=32)
def _monomial_to_unit_hermite(power: int) -> tuple[float, ...]:
    """Coefficients of y^power in the unit-normalized Hermite basis."""
    unit = np.zeros(power + 1)
    unit[power] = 1.0
    he = hermite_e.poly2herme(unit)
    return tuple(float(he[k]) * math.sqrt(math.factorial(k)) for k in range(len(he)))


@lru_cache(maxsize=32)
def _unit_hermite_to_monomial(order: int) -> tuple[float, ...]:
    unit = np.zeros(order + 1)
    unit[order] = 1.0 / math.sqrt(math.factorial(order))
    return tuple(float(c) for c in hermite_e.herme2poly(unit))


def unit_hermite_table(y: np.ndarray, degree: int) -> np.ndarray:
    """h_k(y) = He_k(y)/√k! for k ≤ degree; shape (degree+1, *y.shape)."""
    out = np.empty((degree + 1, *np.shape(y)))
    out[0] = 1.0
    if degree >= 1:
        out[1] = y
    for k in range(1, degree):
        # √(k+1) h_{k+1} = y h_k − √k h_{k−1}
        out[k + 1] = (y * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


@dataclass(frozen=True, eq=False)
class ChaosCoefficients:
    """Sparse coefficients over the unit Hermite basis of the whitened frame."""

    dim: int
    degree: int
    coeffs: dict[MultiIndex, float]
    whitening: np.ndarray
    beta: np.ndarray

    # ── Inspection ───────────────────────────────────────────────────

    @property
    def mean(self) -> float:
        return self.coeffs.get((0,) * self.dim, 0.0)

    def l2_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.coeffs.values()))

    def inner(self, other: "ChaosCoefficients") -> float:
        return sum(c * other.coeffs.get(n, 0.0) for n, c in self.coeffs.items())

    def eigenvalue(self, n: MultiIndex) -> float:
        """Σ n_i β_i, the −L eigenvalue of the basis element n."""
        return float(np.dot(n, self.beta))

    def loaded_eigenvalues(self, tol: float = 0.0) -> list[float]:
        return sorted({self.eigenvalue(n) for n, c in self.coeffs.items() if abs(c) > tol})

    # ── Arithmetic ───────────────────────────────────────────────────

    def map(self, factor: Callable[[float], float]) -> "ChaosCoefficients":
        """Multiply each coefficient by factor(Σ n_i β_i)."""
        out = {n: c * factor(self.eigenvalue(n)) for n, c in self.coeffs.items()}
        return ChaosCoefficients(self.dim, self.degree, out, self.whitening, self.beta)

    def without_mean(self) -> "ChaosCoefficients":
        out = {n: c for n, c in self.coeffs.items() if any(n)}
        return ChaosCoefficients(self.dim, self.degree, out, self.whitening, self.beta)

    def __sub__(self, other: "ChaosCoefficients") -> "ChaosCoefficients":
        keys = set(self.coeffs) | set(other.coeffs)
        out = {n: self.coeffs.get(n, 0.0) - other.coeffs.get(n, 0.0) for n in keys}
        return ChaosCoefficients(self.dim, max(self.degree, other.degree), out, self.whitening, self.beta)

    # ── Evaluation ───────────────────────────────────────────────────

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points x of shape (..., d)."""
        y = np.asarray(x, dtype=float) @ self.whitening.T
        table = unit_hermite_table(np.moveaxis(y, -1, 0), self.degree)  # (deg+1, d, ...)
        total = np.zeros(y.shape[:-1])
        for n, c in self.coeffs.items():
            term = np.full(y.shape[:-1], c)
            for i, k in enumerate(n):
                if k:
                    term = term * table[k, i]
            total += term
        return total

    def to_observable(self) -> PolynomialObservable:
        """Back to a monomial polynomial in the original coordinates x."""
        rep: dict[MultiIndex, float] = {}
        for n, c in self.coeffs.items():
            axes = [list(enumerate(_unit_hermite_to_monomial(k))) for k in n]
            for combo in itertools.product(*axes):
                value = c
                for _, coef in combo:
                    value *= coef
                if value == 0.0:
                    continue
                power = tuple(p for p, _ in combo)
                rep[power] = rep.get(power, 0.0) + value
        in_y = PolynomialObservable.from_dict(self.dim, rep)
        return in_y.substitute_linear(self.whitening)

    def to_frame(self) -> pd.DataFrame:
        """Chaos dump: multi_index, order, coefficient (sorted by order then index)."""
        rows = sorted(self.coeffs.items(), key=lambda kv: (sum(kv[0]), kv[0]))
        return pd.DataFrame(
            {
                "multi_index": [",".join(map(str, n)) for n, _ in rows],
                "order": [sum(n) for n, _ in rows],
                "coefficient": [c for _, c in rows],
            }
        )


def expand(
    phi: PolynomialObservable,
    b: OperatorBundle,
    g: GramianSet | None = None,
    degree: int | None = None,
) -> ChaosCoefficients:
    """Exact expansion of a polynomial observable over the whitened Hermite basis.

    Args:
        phi: observable of degree ≤ degree.
        b: operator bundle providing the A_0 eigenframe and Q_∞^{1/2}.
        g: unused beyond consistency; accepted so call sites can pass the
            Gramian set the bundle was built from.
        degree: truncation D (default config.DEGREE_CAP).

    Raises:
        DegreeOverflowError: deg φ > D, or D above the configured cap.
    """
    degree = config.DEGREE_CAP if degree is None else degree
    if degree > config.DEGREE_CAP:
        raise DegreeOverflowError(f"truncation {degree} above cap {config.DEGREE_CAP}")
    if phi.degree > degree:
        raise DegreeOverflowError(f"observable degree {phi.degree} exceeds truncation {degree}")
    if g is not None and g.model is not b.model:
        logger.debug("Gramian set and bundle come from different model objects")

    in_y = phi.substitute_linear(b.unwhitening)
    coeffs: dict[MultiIndex, float] = {}
    for c, power in in_y.terms:
        axes = [list(enumerate(_monomial_to_unit_hermite(p))) for p in power]
        for combo in itertools.product(*axes):
            value = c
            for _, coef in combo:
                value *= coef
            if value == 0.0:
                continue
            n = tuple(k for k, _ in combo)
            coeffs[n] = coeffs.get(n, 0.0) + value
    coeffs = {n: v for n, v in coeffs.items() if v != 0.0}
    return ChaosCoefficients(phi.dim, degree, coeffs, b.whitening, np.array(b.beta))


def apply_Rt_spectral(c: ChaosCoefficients, b: OperatorBundle, t: float) -> ChaosCoefficients:
    """R_t on chaos: coefficient n scaled by exp(−t Σ n_i β_i)."""
    if t < 0:
        raise ValueError("t must be ≥ 0")
    return c.map(lambda lam: math.exp(-t * lam))


def apply_generator(c: ChaosCoefficients, b: OperatorBundle) -> ChaosCoefficients:
    return c.map(lambda lam: -lam)


def apply_sqrt_shifted_generator(c: ChaosCoefficients, b: OperatorBundle) -> ChaosCoefficients:
    """√(I − L): coefficient n scaled by √(1 + Σ n_i β_i)."""
    return c.map(lambda lam: math.sqrt(1.0 + lam))


def spectral_gap(b: OperatorBundle) -> float:
    """β = smallest eigenvalue of −A_Q."""
    return b.gap


def dirichlet_form(c: ChaosCoefficients) -> float:
    """⟨−Lφ, φ⟩_μ = Σ (Σ n_i β_i) coeff_n²."""
    return sum(c.eigenvalue(n) * v * v for n, v in c.coeffs.items())


def generator_spectrum(b: OperatorBundle, degree: int) -> list[float]:
    """Distinct eigenvalues of −L on chaos of order ≤ degree."""
    values = {0.0}
    for order in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(b.beta)), order):
            values.add(round(float(np.sum(b.beta[list(combo)])), 12))
    return sorted(values)
