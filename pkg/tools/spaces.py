"""Gauss-Sobolev norms, Meyer-type ratios and semigroup diagnostics.

Norms are L^p(μ) integrals under μ = N(0, Q_∞) evaluated by Gauss-Hermite
refinement. The infinite-sequence predicates for diagonal models are decided
with sympy on the sequence formulas when they are available and reported as
truncation trends otherwise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg
import sympy

import config
from tools.chaos import apply_sqrt_shifted_generator, expand
from tools.gramian import GramianSet
from tools.linalg import psd_sqrt, symmetrize
from tools.model import OUModel, sequence_formula, sequence_symbol
from tools.polynomial import PolynomialObservable
from tools.quadrature import QuadratureOrderTooLowError, gaussian_expectation, refine_expectation
from tools.symmetry import OperatorBundle, cameron_martin_residual

logger = logging.getLogger(__name__)


# ── Derivative operators ─────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class _Frames:
    """Matrices that turn ∇φ / D²φ into the weighted derivatives."""

    q_half: np.ndarray
    aq_half: np.ndarray      # (−AQ)^{1/2}
    n_a0: np.ndarray         # √(−A_0) Q_∞^{1/2}
    shifted_a0: np.ndarray   # √(I − A_0)
    a0_qinf: np.ndarray      # A_0 Q_∞^{1/2}


def _frames(m: OUModel, b: OperatorBundle) -> _Frames:
    sqrt_m_a0 = (b.g * np.sqrt(b.beta)) @ b.g.T
    return _Frames(
        q_half=b.q_half,
        aq_half=psd_sqrt(symmetrize(-m.a @ m.q)),
        n_a0=sqrt_m_a0 @ b.qinf_half,
        shifted_a0=(b.g * np.sqrt(1.0 + b.beta)) @ b.g.T,
        a0_qinf=b.a_0 @ b.qinf_half,
    )


def _vec_norm(grad: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """|M ∇φ(x)| row-wise for grad of shape (N, d)."""
    return np.linalg.norm(grad @ mat.T, axis=-1)


def _hs_norm(hess: np.ndarray, left: np.ndarray) -> np.ndarray:
    """‖L H Lᵀ‖_HS row-wise for hess of shape (N, d, d)."""
    return np.linalg.norm(left @ hess @ left.T, axis=(-2, -1))


# ── Sobolev norms ────────────────────────────────────────────────────


@dataclass
class SobolevReport:
    """Derivative-term L^p norms of φ and the two Meyer ratios.

    ``norms`` holds ‖φ‖_p (lp), ‖Q^{1/2}Dφ‖_p (w1p_Q), ‖Q^{1/2}D²φQ^{1/2}‖_p
    (w2p_Q) and ‖(−AQ)^{1/2}Dφ‖_p (w1p_AQ).
    """

    p: float
    norms: dict[str, float]
    meyer_ratio_first: float
    meyer_ratio_second: float
    converged: bool = True
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def full_norms(self) -> dict[str, float]:
        """Sobolev norms as sums: ‖φ‖_{1,p,Q}, ‖φ‖_{2,p,Q}, ‖φ‖_{1,p,AQ}."""
        n = self.norms
        return {
            "w1p_Q": n["lp"] + n["w1p_Q"],
            "w2p_Q": n["lp"] + n["w1p_Q"] + n["w2p_Q"],
            "w1p_AQ": n["lp"] + n["w1p_AQ"],
        }

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "norms": self.norms,
            "full_norms": self.full_norms,
            "meyer_ratio_first": self.meyer_ratio_first,
            "meyer_ratio_second": self.meyer_ratio_second,
            "converged": self.converged,
            **self.extra,
        }


def _lp(values_fn, g: GramianSet, p: float) -> tuple[float, bool]:
    res = refine_expectation(lambda x: np.abs(values_fn(x)) ** p, np.zeros(g.model.dim), g.q_inf)
    return max(res.value, 0.0) ** (1.0 / p), res.converged


def sobolev_norms(phi: PolynomialObservable, m: OUModel, g: GramianSet, b: OperatorBundle, p: float) -> SobolevReport:
    """Gauss-Sobolev norms of a polynomial observable under μ.

    Raises:
        QuadratureOrderTooLowError: even-integer p whose polynomial integrand
            is beyond the largest rule.
        QuadratureDimensionError: d above the tensor quadrature limit.
    """
    if not p > 1 or math.isinf(p):
        raise ValueError("p must lie in (1, ∞)")
    if float(p).is_integer() and int(p) % 2 == 0 and p * phi.degree > 2 * config.LP_MAX_NODES - 1:
        raise QuadratureOrderTooLowError(f"|φ|^{p:g} has degree {p * phi.degree:g}")
    fr = _frames(m, b)
    c = expand(phi, b, g)
    sqrt_shifted = apply_sqrt_shifted_generator(c, b)
    shifted = c.map(lambda lam: 1.0 + lam)

    parts = {
        "lp": lambda x: phi(x),
        "w1p_Q": lambda x: _vec_norm(phi.gradient(x), fr.q_half),
        "w2p_Q": lambda x: _hs_norm(phi.hessian(x), fr.q_half),
        "w1p_AQ": lambda x: _vec_norm(phi.gradient(x), fr.aq_half),
        "sqrt_shifted": lambda x: sqrt_shifted(x),
        "shifted": lambda x: shifted(x),
        "d_a0": lambda x: _vec_norm(phi.gradient(x), fr.n_a0),
        "shifted_d_a0": lambda x: _vec_norm(phi.gradient(x), fr.shifted_a0 @ fr.n_a0),
        "d2_a0": lambda x: _hs_norm(phi.hessian(x), fr.n_a0),
    }
    values: dict[str, float] = {}
    converged = True
    for name, fn in parts.items():
        values[name], ok = _lp(fn, g, p)
        converged = converged and ok

    first = values["sqrt_shifted"] / (values["lp"] + values["d_a0"])
    second = values["shifted"] / (values["lp"] + values["shifted_d_a0"] + values["d2_a0"])
    norms = {k: values[k] for k in ("lp", "w1p_Q", "w2p_Q", "w1p_AQ")}
    extra = {k: values[k] for k in ("sqrt_shifted", "shifted", "d_a0", "shifted_d_a0", "d2_a0")}
    return SobolevReport(p=p, norms=norms, meyer_ratio_first=first, meyer_ratio_second=second,
                         converged=converged, extra=extra)


@dataclass
class MeyerEnvelope:
    """Min/max of the Meyer ratios over a corpus."""

    p: float
    count: int
    first_min: float
    first_max: float
    second_min: float
    second_max: float
    p2_identity_residual: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def p2_identity_residual(phi: PolynomialObservable, g: GramianSet, b: OperatorBundle) -> float:
    """|‖√(I−L)φ‖₂² − ‖φ‖₂² − ‖D_{A_0}φ‖₂²| / max(1, ‖√(I−L)φ‖₂²).

    The left side comes from chaos Parseval, ‖D_{A_0}φ‖₂² from exact
    Gauss-Hermite on a polynomial integrand.
    """
    c = expand(phi, b, g)
    lhs = apply_sqrt_shifted_generator(c, b).l2_norm() ** 2
    fr = _frames(b.model, b)
    zero = np.zeros(phi.dim)
    d_a0 = gaussian_expectation(lambda x: _vec_norm(phi.gradient(x), fr.n_a0) ** 2, zero, g.q_inf,
                                degree=max(2 * phi.degree - 2, 0))
    phi_sq = gaussian_expectation(lambda x: phi(x) ** 2, zero, g.q_inf, degree=2 * phi.degree)
    return abs(lhs - phi_sq - d_a0) / max(1.0, lhs)


def meyer_ratio(
    corpus: list[PolynomialObservable], m: OUModel, g: GramianSet, b: OperatorBundle, p: float,
) -> MeyerEnvelope:
    """Envelope of both Meyer ratios over the corpus; the p = 2 identity is checked on each item."""
    if not corpus:
        raise ValueError("corpus must be nonempty")
    firsts, seconds, identity = [], [], []
    for phi in corpus:
        rep = sobolev_norms(phi, m, g, b, p)
        firsts.append(rep.meyer_ratio_first)
        seconds.append(rep.meyer_ratio_second)
        if p == 2:
            identity.append(p2_identity_residual(phi, g, b))
    return MeyerEnvelope(
        p=p,
        count=len(corpus),
        first_min=min(firsts), first_max=max(firsts),
        second_min=min(seconds), second_max=max(seconds),
        p2_identity_residual=max(identity) if identity else None,
    )


# ── Pointwise identities ─────────────────────────────────────────────


def pointwise_identities(phi: PolynomialObservable, m: OUModel, b: OperatorBundle, points: np.ndarray) -> dict[str, float]:
    """Max residuals at the given points, each scaled by max(1, |right side|).

    first:     |D_{A_0}φ|² = ½|Q^{1/2}Dφ|²
    second:    ‖D²_{A_0}φ‖_HS = ½‖Q^{1/2}D²φQ^{1/2}‖_HS
    mixed:     |A_0Q_∞^{1/2}Dφ|² = ½|(−QA*)^{1/2}Dφ|²
    c2_variant: ‖D²_{A_0}φ‖²_HS against ¼‖QD²φ‖²_HS (recorded, equal only when Q and D²φ commute)
    """
    fr = _frames(m, b)
    grad = phi.gradient(points)
    hess = phi.hessian(points)

    def rel(lhs, rhs):
        return float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))))

    d2_a0 = _hs_norm(hess, fr.n_a0)
    return {
        "first": rel(_vec_norm(grad, fr.n_a0) ** 2, 0.5 * _vec_norm(grad, fr.q_half) ** 2),
        "second": rel(d2_a0, 0.5 * _hs_norm(hess, fr.q_half)),
        "mixed": rel(_vec_norm(grad, fr.a0_qinf) ** 2, 0.5 * _vec_norm(grad, fr.aq_half) ** 2),
        "c2_variant": rel(d2_a0 ** 2, 0.25 * np.linalg.norm(m.q @ hess, axis=(-2, -1)) ** 2),
    }


# ── Semigroup diagnostics ────────────────────────────────────────────


@dataclass
class DiagnosticsReport:
    """Spectral and Hilbert-Schmidt diagnostics of a reversible model."""

    gap: float
    hs_integral: float
    trace_identity: float
    trace_identity_residual: float
    cameron_martin_residual: float
    qt_qinf_ratio_bounds: dict[float, tuple[float, float]] = field(default_factory=dict)
    mu_HQ_mass_indicator: str | None = None
    mu_HQ_partial_sums: list[float] | None = None
    mu_HQ_growth_exponent: float | None = None
    strong_feller: dict[float, dict] = field(default_factory=dict)
    compactness_indicator: bool | None = None
    compactness_trend: list[float] | None = None
    analytic: bool = False

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "hs_integral": self.hs_integral,
            "trace_identity": self.trace_identity,
            "trace_identity_residual": self.trace_identity_residual,
            "cameron_martin_residual": self.cameron_martin_residual,
            "qt_qinf_ratio_bounds": {f"{t:.6g}": list(v) for t, v in self.qt_qinf_ratio_bounds.items()},
            "mu_HQ_mass_indicator": self.mu_HQ_mass_indicator,
            "mu_HQ_partial_sums": self.mu_HQ_partial_sums,
            "mu_HQ_growth_exponent": self.mu_HQ_growth_exponent,
            "strong_feller": {f"{t:.6g}": v for t, v in self.strong_feller.items()},
            "compactness_indicator": self.compactness_indicator,
            "compactness_trend": self.compactness_trend,
            "analytic": self.analytic,
        }


def hs_integral(beta: np.ndarray) -> float:
    """∫₀^∞ ‖S_Q(t)‖²_HS dt = ∫₀^∞ Σ e^{−2β_i t} dt by adaptive quadrature."""
    beta = np.asarray(beta, dtype=float)

    def integrand(t: float) -> float:
        return float(np.sum(np.exp(-2.0 * beta * t)))

    split = 1.0 / float(beta[0])
    head, _ = scipy.integrate.quad(integrand, 0.0, split, epsabs=0.0, epsrel=1e-11, limit=400)
    tail, _ = scipy.integrate.quad(integrand, split, np.inf, epsabs=0.0, epsrel=1e-11, limit=400)
    return head + tail


def qt_qinf_ratios(g: GramianSet, t: float) -> tuple[float, float]:
    """Extreme generalized eigenvalues of Q_t against Q_∞ (1 − e^{−2β_k t} in the symmetric case)."""
    w = scipy.linalg.eigh(g.at(t), g.q_inf, eigvals_only=True)
    return float(w[0]), float(w[-1])


def _growth_exponent(ns: np.ndarray, values: np.ndarray) -> float:
    half = len(ns) // 2
    return float(np.polyfit(np.log(ns[half:]), np.log(values[half:]), 1)[0])


def _analytic_predicates(m: OUModel, times: list[float]) -> dict | None:
    """Decide the three predicates from the α_k, q_k formulas with sympy."""
    if "alpha_k" not in m.params or "q_k" not in m.params:
        return None
    k = sequence_symbol()
    try:
        alpha = sequence_formula(m.params["alpha_k"])
        q = sequence_formula(m.params["q_k"])
        beta = -alpha
        compact = sympy.limit(beta, k, sympy.oo) == sympy.oo
        mass = sympy.Sum(1 / (2 * beta), (k, 1, sympy.oo)).is_convergent()
        feller = {}
        for t in times:
            lim = sympy.limit(sympy.exp(alpha * t) * sympy.sqrt(beta / q), k, sympy.oo)
            feller[t] = bool(lim.is_finite) if lim.is_finite is not None else None
    except (NotImplementedError, TypeError, ValueError) as e:
        logger.warning("Analytic sequence predicates unavailable (%s), reporting trends only", e)
        return None
    return {"compact": bool(compact), "mass": mass, "feller": feller}


def semigroup_diagnostics(
    m: OUModel, g: GramianSet, b: OperatorBundle, times: list[float] | None = None,
) -> DiagnosticsReport:
    """Gap, Hilbert-Schmidt trace identity and the diagonal-model predicates."""
    times = times or [0.1, 1.0, 10.0]
    hs = hs_integral(b.beta)
    trace = 0.5 * float(np.trace(scipy.linalg.inv(-b.a_q)))
    report = DiagnosticsReport(
        gap=b.gap,
        hs_integral=hs,
        trace_identity=trace,
        trace_identity_residual=abs(hs - trace) / max(abs(trace), 1e-300),
        cameron_martin_residual=cameron_martin_residual(b, g),
        qt_qinf_ratio_bounds={t: qt_qinf_ratios(g, t) for t in times},
    )
    if m.kind != "diagonal":
        return report

    alpha = np.diagonal(m.a)
    q = np.diagonal(m.q)
    beta = -alpha
    n = beta.size
    ns = np.arange(1, n + 1, dtype=float)
    partial = np.cumsum(1.0 / (2.0 * beta))
    report.mu_HQ_partial_sums = [float(partial[i - 1]) for i in sorted({max(1, n // 4), max(1, n // 2), n})]
    report.compactness_trend = [float(beta[i - 1]) for i in sorted({max(1, n // 4), max(1, n // 2), n})]
    if n >= 4:
        report.mu_HQ_growth_exponent = _growth_exponent(ns, partial)
    for t in times:
        ratios = np.exp(alpha * t) * np.sqrt(beta / q)
        half = ratios[: max(1, n // 2)]
        report.strong_feller[t] = {
            "sup": float(np.max(ratios)),
            "sup_half": float(np.max(half)),
            "holds": None,
        }

    analytic = _analytic_predicates(m, times)
    if analytic is not None:
        report.analytic = True
        report.compactness_indicator = analytic["compact"]
        report.mu_HQ_mass_indicator = "converges" if analytic["mass"] else "diverges"
        for t in times:
            report.strong_feller[t]["holds"] = analytic["feller"][t]
    else:
        logger.warning("Diagonal model without sequence formulas: predicates reported as trends")
        if report.mu_HQ_growth_exponent is not None:
            report.mu_HQ_mass_indicator = "diverges" if report.mu_HQ_growth_exponent > 0.5 else "bounded"
    return report
