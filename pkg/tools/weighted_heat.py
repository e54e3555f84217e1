"""Weighted heat equation dZ = (Δ − m)Z dt + J dW on L²(ℝ, e^{−κ|ζ|}dζ).

The line is truncated to [−L, L] with homogeneous Dirichlet conditions and
discretized by second-order central differences on n interior nodes. States
are stored in the weighted orthonormal frame x̃_j = w_j x(ζ_j), w_j = √(ρ_j h),
so the Euclidean norm approximates |·|_κ. In that frame

    Ã = W(Δ_h − m)W^{-1},   Q̃ = diag(ρ),   A_Q = Q̃^{-1/2}ÃQ̃^{1/2} = Δ_h − m,

and ÃQ̃ is symmetric by construction. Q_∞ of the truncation has condition
number of order e^{κL}, so the checks here work with A_Q and S_Q directly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

import config
from tools.linalg import expm, psd_sqrt, spectral_norm, symmetrize

logger = logging.getLogger(__name__)


class GridTooCoarseError(RuntimeError):
    """The harmonic residual cannot reach its tolerance on the requested grid."""


# ── Discretization ───────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class WeightedHeatGrid:
    kappa: float
    m: float
    halfwidth: float
    n: int

    @cached_property
    def h(self) -> float:
        return 2.0 * self.halfwidth / (self.n + 1)

    @cached_property
    def zeta(self) -> np.ndarray:
        return -self.halfwidth + self.h * np.arange(1, self.n + 1)

    @cached_property
    def rho(self) -> np.ndarray:
        return np.exp(-self.kappa * np.abs(self.zeta))

    @cached_property
    def weights(self) -> np.ndarray:
        return np.sqrt(self.rho * self.h)

    @cached_property
    def laplacian(self) -> np.ndarray:
        """Dirichlet Δ_h on the interior nodes."""
        n, h2 = self.n, self.h * self.h
        return (np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h2

    @cached_property
    def a(self) -> np.ndarray:
        """Ã_{jk} = (w_j/w_k)(Δ_h)_{jk} − mδ_{jk}, with the ratio taken as one exponential."""
        a_abs = np.abs(self.zeta)
        ratio = np.exp(-0.5 * self.kappa * (a_abs[:, None] - a_abs[None, :]))
        return ratio * self.laplacian - self.m * np.eye(self.n)

    @cached_property
    def q(self) -> np.ndarray:
        return np.diag(self.rho)

    @cached_property
    def a_q(self) -> np.ndarray:
        return self.laplacian - self.m * np.eye(self.n)

    @property
    def harmonic(self) -> bool:
        """True when e^{√m ζ} lies in the weighted space (m < κ²/4)."""
        return self.m < 0.25 * self.kappa ** 2

    @property
    def params(self) -> dict:
        return {"kappa": self.kappa, "m": self.m, "halfwidth": self.halfwidth, "n": self.n, "h": self.h}

    def refined(self) -> "WeightedHeatGrid":
        """Same interval with h halved (n → 2n + 1)."""
        return WeightedHeatGrid(self.kappa, self.m, self.halfwidth, 2 * self.n + 1)


def default_halfwidth(kappa: float) -> float:
    return config.EXAMPLE2_RADIUS_FACTOR / kappa


def discretize(kappa: float, m: float, halfwidth: float | None = None, n: int = 512) -> WeightedHeatGrid:
    """Build the truncated weighted-heat grid.

    Args:
        kappa: weight exponent κ > 0.
        m: mass m > 0.
        halfwidth: truncation radius L (default EXAMPLE2_RADIUS_FACTOR / κ,
            which puts e^{−40} weight at the boundary).
        n: interior grid points, at least 16.
    """
    if not kappa > 0 or not m > 0:
        raise ValueError("κ and m must be > 0")
    if n < 16:
        raise ValueError("n must be ≥ 16")
    halfwidth = default_halfwidth(kappa) if halfwidth is None else float(halfwidth)
    if not halfwidth > 0:
        raise ValueError("halfwidth must be > 0")
    grid = WeightedHeatGrid(float(kappa), float(m), halfwidth, int(n))
    logger.debug("Weighted heat grid κ=%g m=%g L=%g n=%d h=%.4g", kappa, m, halfwidth, n, grid.h)
    return grid


def conjugation_residual(grid: WeightedHeatGrid) -> float:
    """‖Q̃^{-1/2}ÃQ̃^{1/2} − (Δ_h − m)‖ relative to ‖Δ_h − m‖, computed from the frame matrices."""
    root = np.sqrt(grid.rho)
    conjugated = grid.a * root[None, :] / root[:, None]
    return spectral_norm(conjugated - grid.a_q) / spectral_norm(grid.a_q)


# ── Semigroup norm ───────────────────────────────────────────────────


@dataclass
class NormGapReport:
    """‖S_Q(t)‖ against the continuum value e^{−mt}."""

    times: list[float]
    norms: list[float]
    reference: list[float]
    max_relative_gap: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_relative_gap <= self.tol

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "norms": self.norms,
            "reference": self.reference,
            "max_relative_gap": self.max_relative_gap,
            "tol": self.tol,
            "passed": self.passed,
        }


def norm_gap_study(grid: WeightedHeatGrid, t_grid: list[float] | None = None) -> NormGapReport:
    """Compare ‖exp(tA_Q)‖ with e^{−mt}; the default window is t ∈ [0.1, 2]."""
    t_grid = t_grid or list(np.linspace(0.1, 2.0, 8))
    norms = [spectral_norm(expm(t * grid.a_q)) for t in t_grid]
    reference = [math.exp(-grid.m * t) for t in t_grid]
    gap = max(abs(n - r) / r for n, r in zip(norms, reference))
    return NormGapReport(
        times=[float(t) for t in t_grid],
        norms=norms,
        reference=reference,
        max_relative_gap=float(gap),
        tol=config.EXAMPLE2_NORM_GAP,
    )


# ── Coercivity and spectrum ──────────────────────────────────────────


@dataclass
class CoercivityReport:
    discrete: float
    continuum: float
    spectral_abscissa: float
    m: float

    @property
    def sign_agrees(self) -> bool:
        return (self.discrete > 0) == (self.continuum > 0)

    @property
    def abscissa_ok(self) -> bool:
        return self.spectral_abscissa <= -self.m * (1.0 - 1e-12)

    def to_dict(self) -> dict:
        return {
            "discrete": self.discrete,
            "continuum": self.continuum,
            "sign_agrees": self.sign_agrees,
            "spectral_abscissa": self.spectral_abscissa,
            "abscissa_ok": self.abscissa_ok,
        }


def coercivity_constant(grid: WeightedHeatGrid) -> float:
    """c_h = −λ_max of the symmetric part of Ã, so ⟨−Ãx, x⟩ ≥ c_h|x|²."""
    return -float(scipy.linalg.eigvalsh(symmetrize(grid.a))[-1])


def spectral_abscissa(grid: WeightedHeatGrid) -> float:
    """Largest eigenvalue of Ã, read off its symmetric similar A_Q."""
    return float(scipy.linalg.eigvalsh(grid.a_q)[-1])


def coercivity_report(grid: WeightedHeatGrid) -> CoercivityReport:
    return CoercivityReport(
        discrete=coercivity_constant(grid),
        continuum=grid.m - 0.25 * grid.kappa ** 2,
        spectral_abscissa=spectral_abscissa(grid),
        m=grid.m,
    )


# ── Harmonic direction ───────────────────────────────────────────────


def harmonic_vector(grid: WeightedHeatGrid) -> np.ndarray:
    """g(ζ) = e^{√m ζ} in the weighted frame."""
    return grid.weights * np.exp(math.sqrt(grid.m) * grid.zeta)


def harmonic_residual(grid: WeightedHeatGrid) -> float:
    """|(Ãg_h)_interior| / |g_h|, leaving out the two rows next to the Dirichlet boundary."""
    g = harmonic_vector(grid)
    return float(np.linalg.norm((grid.a @ g)[1:-1]) / np.linalg.norm(g))


def rayleigh_quotient(grid: WeightedHeatGrid) -> float:
    g = harmonic_vector(grid)
    return float(g @ grid.a @ g / (g @ g))


@dataclass
class RefinementStudy:
    ns: list[int]
    hs: list[float]
    residuals: list[float]

    @property
    def orders(self) -> list[float]:
        return [
            math.log(self.residuals[i] / self.residuals[i + 1]) / math.log(self.hs[i] / self.hs[i + 1])
            for i in range(len(self.ns) - 1)
        ]

    @property
    def observed_order(self) -> float:
        return min(self.orders)

    def to_dict(self) -> dict:
        return {
            "ns": self.ns,
            "hs": self.hs,
            "residuals": self.residuals,
            "orders": self.orders,
            "observed_order": self.observed_order,
        }


def refinement_study(grid: WeightedHeatGrid, levels: int = 3) -> RefinementStudy:
    """Harmonic residual on grid, 2n+1, 4n+3, … (h halves each level).

    Raises:
        ValueError: m ≥ κ²/4, where e^{√m ζ} is not in the weighted space.
        GridTooCoarseError: the finest residual is still above EXAMPLE2_HARMONIC_TOL.
    """
    if not grid.harmonic:
        raise ValueError("harmonic direction needs m < κ²/4")
    if levels < 2:
        raise ValueError("need at least two refinement levels")
    ns, hs, residuals = [], [], []
    current = grid
    for _ in range(levels):
        ns.append(current.n)
        hs.append(current.h)
        residuals.append(harmonic_residual(current))
        current = current.refined()
    if residuals[-1] > config.EXAMPLE2_HARMONIC_TOL:
        raise GridTooCoarseError(
            f"harmonic residual {residuals[-1]:.3e} at n={ns[-1]} above {config.EXAMPLE2_HARMONIC_TOL:.1e}"
        )
    study = RefinementStudy(ns, hs, residuals)
    logger.info("Harmonic residual order %.2f over n=%s", study.observed_order, ns)
    return study


@dataclass
class EscapeStudy:
    """|Q_∞^{-1/2}g_h| under refinement; growth means g leaves the Cameron-Martin space."""

    ns: list[int]
    norms: list[float]

    @property
    def growing(self) -> bool:
        return all(b > a for a, b in zip(self.norms, self.norms[1:]))

    def to_dict(self) -> dict:
        return {"ns": self.ns, "norms": self.norms, "growing": self.growing}


def cameron_martin_norm(grid: WeightedHeatGrid) -> float:
    """|Q_∞^{-1/2}g_h| from Q_∞^{-1} = −2Q̃^{-1}Ã, i.e. g̃ᵀQ_∞^{-1}g̃ = −2h gᵀ(Δ_h − m)g."""
    g = np.exp(math.sqrt(grid.m) * grid.zeta)
    return math.sqrt(max(-2.0 * grid.h * float(g @ grid.a_q @ g), 0.0))


def cameron_martin_escape(grid: WeightedHeatGrid, levels: int = 3) -> EscapeStudy:
    ns, norms = [], []
    current = grid
    for _ in range(levels):
        ns.append(current.n)
        norms.append(cameron_martin_norm(current))
        current = current.refined()
    return EscapeStudy(ns, norms)


# ── Monte Carlo and quadrature checks ────────────────────────────────


@dataclass
class ShiftedMeasureResult:
    """One exact step from N(λg_h, Q_∞): projected mean against λ|g_h|."""

    z: float
    mean_projection: float
    expected: float
    stderr: float
    samples: int

    @property
    def passed(self) -> bool:
        return abs(self.z) <= config.MC_Z_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "mean_projection": self.mean_projection,
            "expected": self.expected,
            "stderr": self.stderr,
            "samples": self.samples,
            "passed": self.passed,
        }


def _model_of(grid: WeightedHeatGrid):
    from tools.model import OUModel

    return OUModel(a=grid.a, q=grid.q, kind="example2", name="example2", params=grid.params)


def shifted_measure_check(
    grid: WeightedHeatGrid,
    lam: float = 1.0,
    dt: float = 1.0,
    samples: int = 10_000,
    seed: int | None = None,
) -> ShiftedMeasureResult:
    """The shifted Gaussian μ_λ = N(λg_h, Q_∞) is preserved by one transition step.

    The stationary ensemble is simulated once; adding λS(Δ)g_h to its
    endpoints gives exact draws of one step from μ_λ.
    """
    from tools.gramian import build_gramians
    from tools.simulate import simulate_paths

    m = _model_of(grid)
    g = build_gramians(m, [dt])
    seed = config.DEFAULT_SEED if seed is None else seed
    ensemble = simulate_paths(m, g, "stationary", dt, 1, samples, seed)
    g_vec = harmonic_vector(grid)
    g_norm = float(np.linalg.norm(g_vec))
    g_hat = g_vec / g_norm
    endpoints = ensemble.states[:, 1, :] + lam * (m.semigroup(dt) @ g_vec)
    proj = endpoints @ g_hat
    mean = float(proj.mean())
    stderr = float(proj.std(ddof=1) / math.sqrt(samples))
    expected = lam * g_norm
    return ShiftedMeasureResult(
        z=(mean - expected) / stderr if stderr > 0 else 0.0,
        mean_projection=mean,
        expected=expected,
        stderr=stderr,
        samples=samples,
    )


@dataclass
class ShiftConjugationResult:
    """max |R_tφ(x + a) − R_t(φ∘T_a)(x)| over sample points, a = λg_h."""

    max_difference: float
    tolerance: float
    points: int

    @property
    def passed(self) -> bool:
        return self.max_difference <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "max_difference": self.max_difference,
            "tolerance": self.tolerance,
            "points": self.points,
            "passed": self.passed,
        }


def shift_conjugation_check(
    grid: WeightedHeatGrid,
    lam: float = 1.0,
    t: float = 0.5,
    points: int = 8,
    seed: int | None = None,
    n_nodes: int | None = None,
) -> ShiftConjugationResult:
    """Evaluate both sides by two-dimensional cylindrical quadrature.

    φ(x) = sin(y₁) + ½cos(y₂) with y = Pᵀx for orthonormal P spanned by g_h
    and the centre node, Lip(φ) ≤ √(5)/2. The tolerance propagates |Ãa|:
    |S(t)a − a| ≤ t·e^{t·max(0, λ_max(sym Ã))}·|Ãa|.
    """
    from tools.gramian import solve_lyapunov
    from tools.mehler import CylindricalObservable, TransitionKernel, rt_function

    m = _model_of(grid)
    shift = lam * harmonic_vector(grid)
    centre = np.zeros(grid.n)
    centre[grid.n // 2] = 1.0
    directions, _ = np.linalg.qr(np.column_stack([shift, centre]))

    def f(y: np.ndarray) -> np.ndarray:
        return np.sin(y[..., 0]) + 0.5 * np.cos(y[..., 1])

    offset = directions.T @ shift
    phi = CylindricalObservable(directions, f)
    phi_shifted = CylindricalObservable(directions, lambda y: f(y + offset))

    kernel = TransitionKernel.from_model(m, None, t)
    lhs = rt_function(kernel, phi, n_nodes)
    rhs = rt_function(kernel, phi_shifted, n_nodes)

    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    x = rng.standard_normal((points, grid.n)) @ psd_sqrt(solve_lyapunov(m))
    diff = float(np.max(np.abs(lhs(x + shift) - rhs(x))))

    growth = max(0.0, -coercivity_constant(grid))
    lip = math.sqrt(5.0) / 2.0
    tol = lip * t * math.exp(t * growth) * float(np.linalg.norm(grid.a @ shift)) + config.QUAD_ABS_TOL
    return ShiftConjugationResult(max_difference=diff, tolerance=tol, points=points)


# ── Combined report ──────────────────────────────────────────────────


@dataclass
class WeightedHeatReport:
    params: dict
    symmetry_residual: float
    conjugation_residual: float
    norm_gap: NormGapReport
    coercivity: CoercivityReport
    rayleigh_quotient: float | None = None
    refinement: RefinementStudy | None = None
    shifted_measure: ShiftedMeasureResult | None = None
    shift_conjugation: ShiftConjugationResult | None = None
    escape: EscapeStudy | None = None
    checks: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        out = {
            "params": self.params,
            "symmetry_residual": self.symmetry_residual,
            "conjugation_residual": self.conjugation_residual,
            "norm_gap": self.norm_gap.to_dict(),
            "coercivity": self.coercivity.to_dict(),
            "rayleigh_quotient": self.rayleigh_quotient,
            "checks": self.checks,
            "passed": self.passed,
        }
        for key in ("refinement", "shifted_measure", "shift_conjugation", "escape"):
            part = getattr(self, key)
            out[key] = part.to_dict() if part is not None else None
        return out


def _check(name: str, passed: bool, value: float, threshold: float) -> dict:
    return {"name": name, "passed": bool(passed), "value": float(value), "threshold": float(threshold)}


def weighted_heat_report(
    grid: WeightedHeatGrid,
    samples: int = 10_000,
    seed: int | None = None,
    mc_grid_n: int = 64,
) -> WeightedHeatReport:
    """All discrete checks for one (κ, m, L, n).

    The Monte Carlo step runs on a coarser grid of ``mc_grid_n`` nodes on
    the same interval; the quadrature and spectral checks use ``grid``.
    """
    from tools.gramian import commutator_residual

    model = _model_of(grid)
    sym = commutator_residual(model) / (spectral_norm(grid.a) * spectral_norm(grid.q))
    conj = conjugation_residual(grid)
    norm_gap = norm_gap_study(grid)
    coercivity = coercivity_report(grid)
    report = WeightedHeatReport(
        params=grid.params,
        symmetry_residual=sym,
        conjugation_residual=conj,
        norm_gap=norm_gap,
        coercivity=coercivity,
    )
    report.checks += [
        _check("symmetry_residual", sym <= 1e-8, sym, 1e-8),
        _check("conjugation_residual", conj <= 1e-10, conj, 1e-10),
        _check("norm_gap", norm_gap.passed, norm_gap.max_relative_gap, norm_gap.tol),
        _check("coercivity_sign", coercivity.sign_agrees, coercivity.discrete, coercivity.continuum),
        _check("spectral_abscissa", coercivity.abscissa_ok, coercivity.spectral_abscissa, -grid.m),
    ]

    if grid.harmonic:
        report.rayleigh_quotient = rayleigh_quotient(grid)
        report.refinement = refinement_study(grid)
        report.escape = cameron_martin_escape(grid)
        mc_grid = WeightedHeatGrid(grid.kappa, grid.m, grid.halfwidth, max(16, mc_grid_n))
        report.shifted_measure = shifted_measure_check(mc_grid, samples=samples, seed=seed)
        report.shift_conjugation = shift_conjugation_check(mc_grid, seed=seed)
        report.checks += [
            _check("harmonic_order", report.refinement.observed_order >= 1.8, report.refinement.observed_order, 1.8),
            _check("shifted_measure", report.shifted_measure.passed, report.shifted_measure.z, config.MC_Z_THRESHOLD),
            _check("shift_conjugation", report.shift_conjugation.passed,
                   report.shift_conjugation.max_difference, report.shift_conjugation.tolerance),
            _check("cameron_martin_escape", report.escape.growing, report.escape.norms[-1], report.escape.norms[0]),
        ]
    logger.info(
        "Weighted heat κ=%g m=%g n=%d: %d/%d checks passed",
        grid.kappa, grid.m, grid.n, sum(c["passed"] for c in report.checks), len(report.checks),
    )
    return report
