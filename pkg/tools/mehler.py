"""R_tφ(x) = E φ(Z(t,x)) through the Gaussian transition kernel.

The kernel N(S(t)x, Q_t) is shared by the quadrature path here and by the
Monte Carlo path in ``tools.simulate``. On top of it live the checks that
need R_t as an integral operator: the gradient bound, hypercontractivity
with the log-Sobolev inequality, and the Kolmogorov equation residual.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.special

import config
from tools.chaos import (
    apply_generator,
    apply_Rt_spectral,
    dirichlet_form,
    expand,
)
from tools.gramian import GramianSet, finite_time_gramian
from tools.linalg import SingularQError, spectral_norm, sqrt_pair
from tools.model import OUModel
from tools.polynomial import PolynomialObservable, ou_generator
from tools.quadrature import (
    QuadratureOrderTooLowError,
    covariance_factor,
    gaussian_expectation,
    refine_expectation,
    tensor_rule,
)
from tools.symmetry import OperatorBundle

logger = logging.getLogger(__name__)

METHODS = ("gauss-hermite", "monte-carlo")


class SingularQtError(ArithmeticError):
    """Q_t is too close to singular (t below 1e-8/‖A‖)."""


@dataclass(frozen=True)
class CylindricalObservable:
    """φ(x) = f(Pᵀx) for a d×r matrix of directions P (r ≤ 4)."""

    directions: np.ndarray
    f: Callable[[np.ndarray], np.ndarray]
    degree: int | None = None
    sup_norm: float | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.f(np.asarray(x, dtype=float) @ self.directions)


Observable = Union[PolynomialObservable, CylindricalObservable, Callable[[np.ndarray], np.ndarray]]


def clipped_coordinate(dim: int, index: int = 0, level: float = 1.0) -> CylindricalObservable:
    """Bounded, non-smooth test function x ↦ clip(x_index, −level, level)."""
    p = np.zeros((dim, 1))
    p[index, 0] = 1.0
    return CylindricalObservable(p, lambda z: np.clip(z[..., 0], -level, level), sup_norm=level)


# ── Transition kernel ────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Law N(S(t)x, Q_t) of Z(t, x)."""

    time: float
    mean_map: np.ndarray
    covariance: np.ndarray

    @classmethod
    def from_model(cls, m: OUModel, g: GramianSet | None, t: float) -> "TransitionKernel":
        if t < 0:
            raise ValueError("t must be ≥ 0")
        cov = g.at(t) if g is not None else finite_time_gramian(m, t)
        return cls(time=float(t), mean_map=m.semigroup(t), covariance=cov)

    def mean(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.mean_map.T


@dataclass
class RtEstimate:
    """Value of R_tφ(x); stderr is 0 for quadrature."""

    value: float
    stderr: float = 0.0
    method: str = "gauss-hermite"
    nodes: int = 0
    samples: int = 0

    def __float__(self) -> float:
        return self.value


def _degree_of(phi: Observable) -> int | None:
    if isinstance(phi, PolynomialObservable):
        return phi.degree
    if isinstance(phi, CylindricalObservable):
        return phi.degree
    return None


def rt_function(k: TransitionKernel, phi: Observable, n_nodes: int | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized x ↦ R_tφ(x) by tensor Gauss-Hermite on a fixed rule."""
    n = n_nodes or config.GH_NODES
    degree = _degree_of(phi)
    if degree is not None and degree > 2 * n - 1:
        raise QuadratureOrderTooLowError(f"degree {degree} needs more than {n} nodes per axis")

    if isinstance(phi, CylindricalObservable):
        p = phi.directions
        mean_map = p.T @ k.mean_map
        factor = covariance_factor(p.T @ k.covariance @ p)
        integrand = phi.f
    else:
        mean_map = k.mean_map
        factor = covariance_factor(k.covariance)
        integrand = phi
    nodes, weights = tensor_rule(factor.shape[1], n)
    shifts = nodes @ factor.T  # (N, r)

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        centers = x @ mean_map.T  # (M, r)
        pts = centers[:, None, :] + shifts[None, :, :]
        vals = np.asarray(integrand(pts.reshape(-1, pts.shape[-1]))).reshape(len(x), -1)
        return vals @ weights

    return evaluate


def evaluate_Rt(
    m: OUModel,
    g: GramianSet | None,
    phi: Observable,
    x: np.ndarray,
    t: float,
    method: str = "gauss-hermite",
    n_nodes: int | None = None,
    samples: int = 100_000,
    seed: int | None = None,
) -> RtEstimate:
    """R_tφ(x) = ∫ φ(S(t)x + Q_t^{1/2}ξ) γ(dξ).

    Gauss-Hermite is exact for polynomials of degree < 2·nodes and refuses
    above the tensor dimension limit; Monte Carlo returns mean and standard
    error from the seeded transition sampler.

    Raises:
        QuadratureOrderTooLowError, QuadratureDimensionError.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    k = TransitionKernel.from_model(m, g, t)
    x = np.asarray(x, dtype=float)
    if method == "gauss-hermite":
        n = n_nodes or config.GH_NODES
        value = float(rt_function(k, phi, n)(x[None, :])[0])
        return RtEstimate(value=value, method=method, nodes=n)

    from tools.simulate import sample_transition

    pts = sample_transition(k, x, samples, config.DEFAULT_SEED if seed is None else seed)
    vals = np.asarray(phi(pts), dtype=float)
    return RtEstimate(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf"),
        method=method,
        samples=samples,
    )


def invariance_residual(m: OUModel, g: GramianSet, phi: Observable, t: float, n_nodes: int | None = None) -> float:
    """|∫R_tφ dμ − ∫φ dμ| by nested quadrature."""
    k = TransitionKernel.from_model(m, g, t)
    rt = rt_function(k, phi, n_nodes)
    zero = np.zeros(m.dim)
    lhs = gaussian_expectation(rt, zero, g.q_inf, n_nodes)
    rhs = gaussian_expectation(phi, zero, g.q_inf, n_nodes)
    return abs(lhs - rhs)


def chapman_kolmogorov_residual(
    m: OUModel, g: GramianSet, phi: Observable, s: float, t: float, x: np.ndarray, n_nodes: int | None = None,
) -> float:
    """max over rows of x of |R_s(R_tφ)(x) − R_{s+t}φ(x)|."""
    inner = rt_function(TransitionKernel.from_model(m, g, t), phi, n_nodes)
    outer = rt_function(TransitionKernel.from_model(m, g, s), inner, n_nodes)
    direct = rt_function(TransitionKernel.from_model(m, g, s + t), phi, n_nodes)
    x = np.atleast_2d(x)
    return float(np.max(np.abs(outer(x) - direct(x))))


# ── Gradient bound ───────────────────────────────────────────────────


@dataclass
class GradientBoundReport:
    """Matrix bound √t‖Q_t^{-1/2}S(t)Q^{1/2}‖ ≤ 1 and the sampled sup-gradient bound."""

    matrix_values: dict[float, float] = field(default_factory=dict)
    matrix_violations: int = 0
    sampled_sup: dict[float, float] = field(default_factory=dict)
    sampled_bound: dict[float, float] = field(default_factory=dict)
    slack: float = config.GRADIENT_SLACK

    @property
    def sampled_violations(self) -> int:
        return sum(
            1 for t, v in self.sampled_sup.items() if v > self.sampled_bound[t] * (1.0 + self.slack)
        )

    @property
    def passed(self) -> bool:
        return self.matrix_violations == 0 and self.sampled_violations == 0

    def to_dict(self) -> dict:
        fmt = lambda d: {f"{t:.6g}": v for t, v in d.items()}  # noqa: E731
        return {
            "matrix_values": fmt(self.matrix_values),
            "matrix_violations": self.matrix_violations,
            "sampled_sup": fmt(self.sampled_sup),
            "sampled_bound": fmt(self.sampled_bound),
            "sampled_violations": self.sampled_violations,
            "passed": self.passed,
        }


def gradient_matrix_norm(m: OUModel, g: GramianSet, b: OperatorBundle, t: float) -> float:
    """‖Q_t^{-1/2} S(t) Q^{1/2}‖.

    Raises:
        SingularQtError: t < 1e-8/‖A‖ or Q_t numerically singular.
    """
    if t < 1e-8 / m.scale:
        raise SingularQtError(f"t = {t:.3e} below 1e-8/‖A‖")
    try:
        _, qt_half_inv = sqrt_pair(g.at(t), floor=1e-15, name="Q_t")
    except SingularQError as e:
        raise SingularQtError(str(e)) from e
    return spectral_norm(qt_half_inv @ m.semigroup(t) @ b.q_half)


def check_gradient_bound(
    m: OUModel,
    g: GramianSet,
    b: OperatorBundle,
    phi: Observable,
    t_grid: list[float],
    sup_norm: float | None = None,
    points: np.ndarray | None = None,
    n_points: int = 8,
    seed: int | None = None,
    n_nodes: int | None = None,
) -> GradientBoundReport:
    """Check the 1/√t matrix bound and |Q^{1/2}∇R_tφ| ≤ √(2/π) t^{-1/2} ‖φ‖∞.

    The gradient is taken by central differences on the quadrature value
    with step FD_STEP_FACTOR·√λ_max(Q_∞).
    """
    if sup_norm is None:
        sup_norm = getattr(phi, "sup_norm", None)
    if sup_norm is None:
        raise ValueError("bounded observable needs a known sup norm")
    if points is None:
        rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
        points = rng.standard_normal((n_points, m.dim)) @ b.qinf_half
    h = config.FD_STEP_FACTOR * math.sqrt(float(np.max(np.linalg.eigvalsh(g.q_inf))))

    report = GradientBoundReport()
    for t in t_grid:
        value = gradient_matrix_norm(m, g, b, t) * math.sqrt(t)
        report.matrix_values[float(t)] = value
        if value > 1.0 + 1e-12:
            report.matrix_violations += 1

        rt = rt_function(TransitionKernel.from_model(m, g, t), phi, n_nodes)
        grads = np.empty_like(points)
        for i in range(m.dim):
            e = np.zeros(m.dim)
            e[i] = h
            grads[:, i] = (rt(points + e) - rt(points - e)) / (2.0 * h)
        sup = float(np.max(np.linalg.norm(grads @ b.q_half, axis=1)))
        report.sampled_sup[float(t)] = sup
        report.sampled_bound[float(t)] = math.sqrt(2.0 / math.pi) / math.sqrt(t) * sup_norm
    if report.matrix_violations:
        logger.warning("Gradient matrix bound violated at %d times", report.matrix_violations)
    return report


# ── Hypercontractivity and LSI ───────────────────────────────────────


@dataclass
class HypercontractivityReport:
    p: float
    q: float
    t: float
    rt_norm_q: float
    phi_norm_p: float
    entropy: float
    dirichlet: float
    gap: float
    converged: bool

    @property
    def hypercontractivity_margin(self) -> float:
        """‖φ‖_p − ‖R_tφ‖_q (≥ 0)."""
        return self.phi_norm_p - self.rt_norm_q

    @property
    def lsi_margin(self) -> float:
        """(2/β)⟨−Lφ,φ⟩ − [∫φ² log φ² dμ − ‖φ‖² log ‖φ‖²]."""
        return 2.0 / self.gap * self.dirichlet - self.entropy

    @property
    def lsi_margin_weak(self) -> float:
        """(2/β)⟨−Lφ,φ⟩ + ‖φ‖² log‖φ‖ − ∫φ² log|φ| dμ."""
        return 2.0 / self.gap * self.dirichlet - 0.5 * self.entropy

    def to_dict(self) -> dict:
        return {
            "p": self.p, "q": self.q, "t": self.t,
            "rt_norm_q": self.rt_norm_q, "phi_norm_p": self.phi_norm_p,
            "hypercontractivity_margin": self.hypercontractivity_margin,
            "entropy": self.entropy, "dirichlet": self.dirichlet,
            "lsi_margin": self.lsi_margin, "lsi_margin_weak": self.lsi_margin_weak,
            "converged": self.converged,
        }


def critical_exponent(p: float, gap: float, t: float) -> float:
    """q = 1 + (p − 1) e^{2βt}."""
    return 1.0 + (p - 1.0) * math.exp(2.0 * gap * t)


def lp_norm(f: Callable[[np.ndarray], np.ndarray], g: GramianSet, p: float) -> tuple[float, bool]:
    """(∫|f|^p dμ)^{1/p} with node-doubling refinement; returns (norm, converged)."""
    res = refine_expectation(lambda x: np.abs(f(x)) ** p, np.zeros(g.model.dim), g.q_inf)
    return max(res.value, 0.0) ** (1.0 / p), res.converged


def check_hypercontractivity_lsi(
    m: OUModel,
    g: GramianSet,
    b: OperatorBundle,
    phi: PolynomialObservable,
    p: float,
    t: float,
) -> HypercontractivityReport:
    """‖R_tφ‖_q ≤ ‖φ‖_p at q = 1 + (p−1)e^{2βt}, plus the log-Sobolev inequality.

    Entropy is ∫φ² log φ² dμ − ‖φ‖²_2 log ‖φ‖²_2 with 0·log 0 = 0; the
    Dirichlet form comes from the spectral generator.
    """
    if p <= 1:
        raise ValueError("p must be > 1")
    if phi.is_zero:
        raise ValueError("φ must not vanish identically")
    beta = b.gap
    q = critical_exponent(p, beta, t)
    c = expand(phi, b, g)
    rt = apply_Rt_spectral(c, b, t)

    rt_norm, ok1 = lp_norm(rt, g, q)
    phi_norm, ok2 = lp_norm(c, g, p)

    zero = np.zeros(m.dim)
    ent = refine_expectation(lambda x: scipy.special.xlogy(c(x) ** 2, c(x) ** 2), zero, g.q_inf)
    norm2 = c.l2_norm() ** 2
    entropy = ent.value - float(scipy.special.xlogy(norm2, norm2))

    report = HypercontractivityReport(
        p=p, q=q, t=t,
        rt_norm_q=rt_norm, phi_norm_p=phi_norm,
        entropy=entropy, dirichlet=dirichlet_form(c), gap=beta,
        converged=ok1 and ok2 and ent.converged,
    )
    logger.debug("Hypercontractivity p=%.3g q=%.4g margin=%.3e lsi=%.3e", p, q,
                 report.hypercontractivity_margin, report.lsi_margin)
    return report


# ── Kolmogorov equation ──────────────────────────────────────────────


@dataclass
class KolmogorovReport:
    """Absolute residuals of ∂_t u = Lu for u = R_tφ in the two equivalent forms.

    ``scale`` is max(1, max|∂_t u|) over the points; ``residual_relative`` divides by it.
    """

    residual: float
    residual_conjugated: float
    form_agreement: float
    scale: float = 1.0

    @property
    def residual_relative(self) -> float:
        return self.residual / self.scale

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "residual_conjugated": self.residual_conjugated,
            "form_agreement": self.form_agreement,
            "du_dt_scale": self.scale,
            "residual_relative": self.residual_relative,
        }


def kolmogorov_residual(
    m: OUModel,
    g: GramianSet,
    b: OperatorBundle,
    phi: PolynomialObservable,
    t: float,
    points: np.ndarray,
) -> KolmogorovReport:
    """Max residual of ∂_t u − ½tr(QD²u) − ⟨x, A*Du⟩ at the given points.

    u(t,·) comes from the chaos path in closed polynomial form and ∂_t u by
    spectral differentiation; the spatial part is symbolic. The same residual
    is evaluated in the conjugated form ½tr(Q^{1/2}D²uQ^{1/2}) +
    ⟨Q^{-1/2}x, A_Q Q^{1/2}Du⟩. Residuals are absolute; the report also carries
    the max(1, max|∂_t u|) scale.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    c = expand(phi, b, g)
    u_chaos = apply_Rt_spectral(c, b, t)
    u = u_chaos.to_observable()
    du_dt = apply_generator(u_chaos, b)(points)

    lu = ou_generator(u, m.a, m.q)(points)

    grad = u.gradient(points)
    hess = u.hessian(points)
    trace_term = 0.5 * np.einsum("ij,njk,ki->n", b.q_half, hess, b.q_half)
    drift_term = np.einsum("ni,ni->n", points @ b.q_half_inv, grad @ b.q_half @ b.a_q)
    lu_conj = trace_term + drift_term

    scale = max(1.0, float(np.max(np.abs(du_dt))))
    return KolmogorovReport(
        residual=float(np.max(np.abs(du_dt - lu))),
        residual_conjugated=float(np.max(np.abs(du_dt - lu_conj))),
        form_agreement=float(np.max(np.abs(lu - lu_conj))),
        scale=scale,
    )
