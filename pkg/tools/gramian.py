"""Gramians Q_t and Q_∞ and the Lyapunov identities they satisfy."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.integrate
import scipy.linalg

import config
from tools.linalg import spectral_norm, symmetrize
from tools.model import OUModel, van_loan_gramian

logger = logging.getLogger(__name__)

# Below this value of t·‖A‖ the subtraction Q_∞ − S Q_∞ S* loses too many digits.
_SHORT_TIME = 0.5


class NoUniqueSolutionError(ArithmeticError):
    """A and −A* share an eigenvalue, so AX + XA* = −Q has no unique solution."""


def commutator_residual(m: OUModel) -> float:
    """‖AQ − QA*‖ (spectral norm)."""
    return spectral_norm(m.a @ m.q - m.q @ m.a.T)


def is_reversible(m: OUModel) -> bool:
    scale = max(spectral_norm(m.a) * spectral_norm(m.q), 1e-300)
    return commutator_residual(m) <= config.SYMMETRY_TOL * scale


def solve_lyapunov(m: OUModel) -> np.ndarray:
    """Unique solution of AX + XA* = −Q.

    Diagonal models use the closed form q_k / (2|α_k|). Reversible models use
    X = −½A⁻¹Q; the rest go through scipy's Bartels-Stewart solver.

    Raises:
        NoUniqueSolutionError: some λ_i + λ_j vanishes.
    """
    eig = scipy.linalg.eigvals(m.a)
    gap = float(np.min(np.abs(eig[:, None] + eig[None, :])))
    if gap <= config.LYAPUNOV_TOL * m.scale:
        raise NoUniqueSolutionError(f"min |λ_i + λ_j| = {gap:.3e}; Lyapunov solution not unique")

    if m.is_diagonal:
        return np.diag(np.diagonal(m.q) / (-2.0 * np.diagonal(m.a)))
    if is_reversible(m):
        return symmetrize(-0.5 * scipy.linalg.solve(m.a, m.q))
    return symmetrize(scipy.linalg.solve_continuous_lyapunov(m.a, -m.q))


def lyapunov_residual(m: OUModel, q_inf: np.ndarray) -> float:
    """Relative residual ‖AX + XA* + Q‖ / (‖A‖‖X‖ + ‖Q‖)."""
    res = m.a @ q_inf + q_inf @ m.a.T + m.q
    scale = spectral_norm(m.a) * spectral_norm(q_inf) + spectral_norm(m.q)
    return spectral_norm(res) / max(scale, 1e-300)


def symmetric_lyapunov_residual(m: OUModel, q_inf: np.ndarray) -> float:
    """max entry of |AQ_∞ + ½Q| and |Q_∞A* + ½Q|, relative to ‖Q‖."""
    half = 0.5 * m.q
    res = max(np.max(np.abs(m.a @ q_inf + half)), np.max(np.abs(q_inf @ m.a.T + half)))
    return float(res) / max(spectral_norm(m.q), 1e-300)


def quadrature_gramian(m: OUModel, t: float) -> np.ndarray:
    """∫₀^t S(s) Q S*(s) ds by adaptive vector quadrature."""
    if t == 0:
        return np.zeros_like(m.q)

    def integrand(s: float) -> np.ndarray:
        st = m.semigroup(s)
        return st @ m.q @ st.T

    value, err = scipy.integrate.quad_vec(integrand, 0.0, t, epsabs=config.QUAD_ABS_TOL, epsrel=1e-12)
    logger.debug("quad_vec gramian t=%.3g error estimate %.2e", t, err)
    return symmetrize(value)


def finite_time_gramian(m: OUModel, t: float, q_inf: np.ndarray | None = None) -> np.ndarray:
    """Q_t = Q_∞ − S(t)Q_∞S*(t), or quadrature when Q_∞ does not exist."""
    if t < 0:
        raise ValueError("t must be ≥ 0")
    if t == 0:
        return np.zeros_like(m.q)
    if m.is_diagonal:
        alpha = np.diagonal(m.a)
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = np.where(alpha == 0.0, t, np.expm1(2.0 * alpha * t) / (2.0 * alpha))
        return np.diag(np.diagonal(m.q) * rate)
    if t * m.scale < _SHORT_TIME:
        return van_loan_gramian(m.a, m.q, t)
    if q_inf is None and m.is_hurwitz:
        q_inf = solve_lyapunov(m)
    if q_inf is None:
        return quadrature_gramian(m, t)
    st = m.semigroup(t)
    return symmetrize(q_inf - st @ q_inf @ st.T)


@dataclass(frozen=True, eq=False)
class GramianSet:
    """Q_∞ with Q_t on a stored time grid."""

    model: OUModel
    q_inf: np.ndarray
    lyapunov_residual: float
    q_t: dict[float, np.ndarray] = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        if t in self.q_t:
            return self.q_t[t]
        return finite_time_gramian(self.model, t, self.q_inf)

    @property
    def times(self) -> list[float]:
        return sorted(self.q_t)


def build_gramians(m: OUModel, t_grid: list[float] | None = None) -> GramianSet:
    """Solve for Q_∞ and tabulate Q_t on ``t_grid``."""
    q_inf = solve_lyapunov(m)
    residual = lyapunov_residual(m, q_inf)
    if residual > config.LYAPUNOV_TOL:
        logger.warning("Lyapunov residual %.3e above tolerance %.1e", residual, config.LYAPUNOV_TOL)
    if t_grid is None:
        t_grid = default_time_grid(m)
    q_t = {float(t): finite_time_gramian(m, float(t), q_inf) for t in t_grid}
    return GramianSet(model=m, q_inf=q_inf, lyapunov_residual=residual, q_t=q_t)


def default_time_grid(m: OUModel) -> list[float]:
    """{0.01, 0.1, 1, 10} · (1/‖A‖)."""
    base = 1.0 / m.scale
    return [0.01 * base, 0.1 * base, base, 10.0 * base]


# ── Property checks ──────────────────────────────────────────────────


def identity_residual(g: GramianSet) -> float:
    """max over stored t of ‖Q_t − (Q_∞ − S Q_∞ S*)‖ / ‖Q_∞‖, with Q_t from quadrature."""
    worst = 0.0
    scale = max(spectral_norm(g.q_inf), 1e-300)
    for t in g.times:
        direct = quadrature_gramian(g.model, t)
        worst = max(worst, spectral_norm(direct - g.q_t[t]) / scale)
    return worst


def monotonicity_margin(g: GramianSet) -> float:
    """min eigenvalue of Q_{t_{i+1}} − Q_{t_i} over the stored grid (≥ −tol when monotone)."""
    times = g.times
    margin = float("inf")
    for t0, t1 in zip(times, times[1:]):
        margin = min(margin, float(np.min(scipy.linalg.eigvalsh(g.q_t[t1] - g.q_t[t0]))))
    return margin if np.isfinite(margin) else 0.0


def convergence_violation(g: GramianSet) -> float:
    """max over stored t of ‖Q_t − Q_∞‖ − ‖S(t)‖²‖Q_∞‖ (≤ 0 up to rounding)."""
    worst = -float("inf")
    qn = spectral_norm(g.q_inf)
    for t in g.times:
        bound = spectral_norm(g.model.semigroup(t)) ** 2 * qn
        worst = max(worst, spectral_norm(g.q_t[t] - g.q_inf) - bound)
    return worst


def kernel_inclusion_residual(g: GramianSet, rel_tol: float = 1e-10) -> float:
    """max |Q v| over unit eigenvectors v of near-zero eigenvalues of Q_∞."""
    w, v = scipy.linalg.eigh(g.q_inf)
    null = w <= rel_tol * max(float(w[-1]), 1e-300)
    if not np.any(null):
        return 0.0
    return float(np.max(np.linalg.norm(g.model.q @ v[:, null], axis=0)))


def eigenvalue_table(g: GramianSet, t_grid: list[float]) -> pd.DataFrame:
    """Eigenvalues of Q_t over a time grid: columns t, lambda_1..lambda_d (ascending)."""
    rows = []
    for t in t_grid:
        w = scipy.linalg.eigvalsh(g.at(float(t)))
        rows.append([float(t), *w.tolist()])
    cols = ["t"] + [f"lambda_{i + 1}" for i in range(g.model.dim)]
    return pd.DataFrame(rows, columns=cols)
