"""Reversibility of the OU transition semigroup and the derived operators.

A model is reversible exactly when AQ = QA* (equivalently S(t)Q = QS*(t)).
In that case the conjugated generator A_Q = Q^{-1/2}AQ^{1/2} and the
whitened generator A_0 = Q_∞^{-1/2}AQ_∞^{1/2} are symmetric negative
definite, and everything spectral downstream is read off their eigenpairs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

import config
from tools.gramian import GramianSet, commutator_residual
from tools.linalg import (
    SingularQError,
    sign_normalize_columns,
    spectral_norm,
    sqrt_pair,
    symmetrize,
)
from tools.model import OUModel

logger = logging.getLogger(__name__)


class NotSymmetricError(ValueError):
    """The operation requires a reversible model."""


# ── Reversibility ────────────────────────────────────────────────────


@dataclass
class SymmetryReport:
    """Matrix and semigroup criteria for reversibility on a t-grid."""

    is_symmetric: bool
    commutator_residual: float
    semigroup_residuals: dict[float, float]
    contraction_margin: float | None
    tol: float
    semigroup_verdict: bool = False

    @property
    def criteria_agree(self) -> bool:
        return self.is_symmetric == self.semigroup_verdict

    def to_dict(self) -> dict:
        return {
            "is_symmetric": self.is_symmetric,
            "commutator_residual": self.commutator_residual,
            "semigroup_residuals": {f"{t:.6g}": r for t, r in self.semigroup_residuals.items()},
            "semigroup_verdict": self.semigroup_verdict,
            "criteria_agree": self.criteria_agree,
            "contraction_margin": self.contraction_margin,
            "tol": self.tol,
        }


def residual_time_grid(m: OUModel) -> list[float]:
    """Default residual grid {0.01, 0.1, 1, 10} · (1/‖A‖)."""
    base = 1.0 / m.scale
    return [0.01 * base, 0.1 * base, base, 10.0 * base]


def check_reversibility(m: OUModel, t_grid: list[float] | None = None, tol: float | None = None) -> SymmetryReport:
    """Evaluate AQ = QA* and S(t)Q = QS*(t); never raises on a negative verdict."""
    tol = config.SYMMETRY_TOL if tol is None else tol
    t_grid = t_grid or residual_time_grid(m)
    qn = max(spectral_norm(m.q), 1e-300)

    comm = commutator_residual(m)
    is_symmetric = comm <= tol * max(spectral_norm(m.a) * qn, 1e-300)

    residuals: dict[float, float] = {}
    semigroup_ok = True
    with np.errstate(over="ignore", invalid="ignore"):
        for t in t_grid:
            st = m.semigroup(t)
            r = spectral_norm(st @ m.q - m.q @ st.T) if np.all(np.isfinite(st)) else float("inf")
            residuals[float(t)] = r
            if not r <= tol * qn * max(1.0, spectral_norm(st) if np.all(np.isfinite(st)) else 1.0):
                semigroup_ok = False

    margin = None
    try:
        q_half, q_half_inv = sqrt_pair(m.q)
        with np.errstate(over="ignore", invalid="ignore"):
            norms = [spectral_norm(q_half_inv @ m.semigroup(t) @ q_half) for t in t_grid]
        margin = float(min(1.0 - n for n in norms))
    except (SingularQError, np.linalg.LinAlgError, ValueError):
        logger.debug("Q singular, contraction margin not evaluated")

    report = SymmetryReport(
        is_symmetric=bool(is_symmetric),
        commutator_residual=comm,
        semigroup_residuals=residuals,
        contraction_margin=margin,
        tol=tol,
        semigroup_verdict=semigroup_ok,
    )
    if not report.criteria_agree:
        logger.warning(
            "Matrix and semigroup symmetry criteria disagree (commutator %.3e, semigroup max %.3e)",
            comm, max(residuals.values()),
        )
    return report


# ── 2×2 closed form ──────────────────────────────────────────────────


def classify_2x2(a: float, b: float, c: float, d: float, q: float) -> bool:
    """Closed-form criterion for A = [[a, c], [d, b]], Q = diag(1, q).

    True iff a < 0, det A > 0, d = cq and (a − b)² + 4c²q > 0.
    """
    if not q > 0 or q == 1:
        raise ValueError("classify_2x2 needs 0 < q ≠ 1")
    det = a * b - c * d
    coupled = math.isclose(d, c * q, rel_tol=1e-12, abs_tol=1e-14)
    return bool(a < 0 and det > 0 and coupled and (a - b) ** 2 + 4 * c * c * q > 0)


def materialize_2x2(a: float, b: float, c: float, d: float, q: float) -> OUModel:
    return OUModel(a=np.array([[a, c], [d, b]]), q=np.diag([1.0, q]), kind="dense", name="2x2")


# ── Operator bundle ──────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    """Derived operators of a reversible model.

    ``beta`` holds 0 < β_1 ≤ … ≤ β_d, the eigenvalues of −A_Q (and of −A_0);
    ``f`` are the matching eigenvectors of A_Q, ``g`` those of A_0.
    """

    model: OUModel
    a_q: np.ndarray
    a_0: np.ndarray
    v: np.ndarray
    u: np.ndarray
    beta: np.ndarray
    f: np.ndarray
    g: np.ndarray
    q_half: np.ndarray
    q_half_inv: np.ndarray
    qinf_half: np.ndarray
    qinf_half_inv: np.ndarray
    residuals: dict[str, float] = field(default_factory=dict)

    def s_q(self, t: float) -> np.ndarray:
        """S_Q(t) = Q^{-1/2} S(t) Q^{1/2}."""
        return self.q_half_inv @ self.model.semigroup(t) @ self.q_half

    def s_q_spectral(self, t: float) -> np.ndarray:
        return (self.f * np.exp(-self.beta * t)) @ self.f.T

    def s_0(self, t: float) -> np.ndarray:
        """S_0(t) = Q_∞^{-1/2} S(t) Q_∞^{1/2}, evaluated in the A_0 eigenframe."""
        return (self.g * np.exp(-self.beta * t)) @ self.g.T

    @property
    def gap(self) -> float:
        return float(self.beta[0])

    @property
    def whitening(self) -> np.ndarray:
        """M with y = M x the chaos coordinates: M = Gᵀ Q_∞^{-1/2}."""
        return self.g.T @ self.qinf_half_inv

    @property
    def unwhitening(self) -> np.ndarray:
        """Inverse of ``whitening``: x = Q_∞^{1/2} G y."""
        return self.qinf_half @ self.g

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


def _polar_orthogonal(v: np.ndarray) -> np.ndarray:
    """Orthogonal polar factor U = W Zᵀ of V = W Σ Zᵀ.

    Left singular vectors are sign-normalized with the right ones flipped
    alongside, so the factorization is reproducible; U itself is unique
    for nonsingular V.
    """
    w, _, zt = scipy.linalg.svd(v)
    normalized = sign_normalize_columns(w)
    signs = np.where(np.all(normalized == w, axis=0), 1.0, -1.0)
    return normalized @ (zt * signs[:, None])


def build_operator_bundle(m: OUModel, g: GramianSet, report: SymmetryReport | None = None) -> OperatorBundle:
    """Construct A_Q, A_0, V, U and the eigenpairs of −A_Q.

    Raises:
        NotSymmetricError: the model fails the reversibility criterion.
        SingularQError: Q or Q_∞ falls below the eigenvalue floor.
    """
    report = report or check_reversibility(m)
    if not report.is_symmetric:
        raise NotSymmetricError(f"model is not reversible (‖AQ − QA*‖ = {report.commutator_residual:.3e})")

    q_half, q_half_inv = sqrt_pair(m.q, name="Q")
    qinf_half, qinf_half_inv = sqrt_pair(g.q_inf, name="Q_∞")

    raw_aq = q_half_inv @ m.a @ q_half
    raw_a0 = qinf_half_inv @ m.a @ qinf_half
    a_q = symmetrize(raw_aq)
    a_0 = symmetrize(raw_a0)

    beta_q, f = scipy.linalg.eigh(-a_q)
    beta_0, g_vecs = scipy.linalg.eigh(-a_0)
    f = sign_normalize_columns(f)
    g_vecs = sign_normalize_columns(g_vecs)
    if beta_q[0] <= 0:
        raise NotSymmetricError(f"A_Q is not negative definite (λ_max = {-beta_q[0]:.3e})")

    v = q_half @ qinf_half_inv
    u = _polar_orthogonal(v)

    aq_norm = max(spectral_norm(a_q), 1e-300)
    a0_norm = max(spectral_norm(a_0), 1e-300)
    t_ref = 1.0 / m.scale
    s0 = (g_vecs * np.exp(-beta_0 * t_ref)) @ g_vecs.T
    sq = q_half_inv @ m.semigroup(t_ref) @ q_half
    sqrt_m2a0 = (g_vecs * np.sqrt(2.0 * beta_0)) @ g_vecs.T

    residuals = {
        "a_q_asymmetry": spectral_norm(raw_aq - raw_aq.T) / aq_norm,
        "a_0_asymmetry": spectral_norm(raw_a0 - raw_a0.T) / a0_norm,
        "a_0_vtv": spectral_norm(a_0 + 0.5 * v.T @ v) / a0_norm,
        "u_orthogonality": spectral_norm(u.T @ u - np.eye(m.dim)),
        "polar": spectral_norm(v - u @ sqrt_m2a0) / max(spectral_norm(v), 1e-300),
        "v_conjugation": spectral_norm(v @ s0 @ np.linalg.inv(v) - sq),
        "u_conjugation": spectral_norm(u @ s0 @ u.T - sq),
        "gap_transfer": abs(beta_q[0] - beta_0[0]) / max(beta_q[0], 1e-300),
    }
    worst = max(residuals, key=residuals.get)
    if residuals[worst] > config.BUNDLE_TOL:
        logger.warning("Operator bundle residual %s = %.3e above %.1e", worst, residuals[worst], config.BUNDLE_TOL)

    return OperatorBundle(
        model=m, a_q=a_q, a_0=a_0, v=v, u=u,
        beta=beta_q, f=f, g=g_vecs,
        q_half=q_half, q_half_inv=q_half_inv,
        qinf_half=qinf_half, qinf_half_inv=qinf_half_inv,
        residuals=residuals,
    )


# ── Spectral consequences ────────────────────────────────────────────


def contraction_sharpness(b: OperatorBundle, t_grid: list[float]) -> float:
    """max over t of |‖S_Q(t)‖ − e^{−β_1 t}|."""
    return max(abs(spectral_norm(b.s_q(t)) - math.exp(-b.gap * t)) for t in t_grid)


def range_ratios(b: OperatorBundle, g: GramianSet, t: float) -> tuple[float, float]:
    """Extreme generalized eigenvalues of Q_t against Q^{1/2}(I − A_Q)^{-1}Q^{1/2}.

    Bounded above and below for each t > 0, which witnesses
    Q_t^{1/2}(H) = Q^{1/2}(dom √(−A_Q)). For a diagonal model the ratios are
    (Q_t)_k (1 + β_k) / q_k.
    """
    resolvent = scipy.linalg.inv(np.eye(b.model.dim) - b.a_q)
    reference = symmetrize(b.q_half @ resolvent @ b.q_half)
    w = scipy.linalg.eigh(g.at(t), reference, eigvals_only=True)
    return float(w[0]), float(w[-1])


def cameron_martin_residual(b: OperatorBundle, g: GramianSet) -> float:
    """‖Q^{-1/2} Q_∞ Q^{-1/2} + ½ A_Q^{-1}‖ relative to ‖A_Q^{-1}‖."""
    inv = scipy.linalg.inv(b.a_q)
    lhs = b.q_half_inv @ g.q_inf @ b.q_half_inv
    return spectral_norm(lhs + 0.5 * inv) / max(spectral_norm(inv), 1e-300)
