"""Exact-in-law sampling of the OU process and the estimators built on it.

One step is Z_{k+1} = S(Δ)Z_k + Q_Δ^{1/2} η_k with η_k i.i.d. N(0, I) and
the symmetric square root of Q_Δ. Random numbers come from numpy
SeedSequence substreams keyed by (seed, tag, block), so results are
bit-identical under any worker count.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

import config
from tools.chaos import apply_Rt_spectral, expand
from tools.gramian import GramianSet, finite_time_gramian
from tools.linalg import psd_sqrt
from tools.mehler import TransitionKernel
from tools.model import OUModel
from tools.polynomial import PolynomialObservable
from tools.symmetry import OperatorBundle

logger = logging.getLogger(__name__)

_TAG_TRANSITION = 1
_TAG_PATHS = 2
_TAG_DECAY = 3


class NotStationaryStartError(ValueError):
    """Detailed-balance test needs an ensemble started from the invariant law."""


def _blocks(n: int) -> list[tuple[int, int]]:
    size = config.MC_BLOCK_SIZE
    return [(start, min(size, n - start)) for start in range(0, n, size)]


def _block_rng(seed: int, tag: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag, block)))


def _parallel_blocks(n: int, work: Callable[[int, int, int], np.ndarray]) -> np.ndarray:
    """Run work(block_index, start, size) over sample blocks; merge in block order."""
    blocks = _blocks(n)
    if len(blocks) == 1:
        return work(0, *blocks[0])
    with ThreadPoolExecutor(max_workers=config.MAX_WORKERS) as pool:
        parts = list(pool.map(lambda ib: work(ib[0], *ib[1]), enumerate(blocks)))
    return np.concatenate(parts, axis=0)


# ── Transition sampling ──────────────────────────────────────────────


def sample_transition(k: TransitionKernel, x: np.ndarray, n: int, seed: int) -> np.ndarray:
    """n draws from N(S(t)x, Q_t); returns shape (n, d)."""
    if n < 1:
        raise ValueError("n must be ≥ 1")
    x = np.asarray(x, dtype=float)
    mean = k.mean(x)
    if not np.any(k.covariance):
        return np.tile(mean, (n, 1))
    root = psd_sqrt(k.covariance)

    def work(block: int, start: int, size: int) -> np.ndarray:
        eta = _block_rng(seed, _TAG_TRANSITION, block).standard_normal((size, x.size))
        return mean + eta @ root

    return _parallel_blocks(n, work)


# ── Path ensembles ───────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """samples × (steps+1) × d states on a uniform grid."""

    times: np.ndarray
    states: np.ndarray
    seed: int
    model_hash: str
    dt: float
    x0_law: str
    noise: np.ndarray | None = field(default=None, repr=False)

    @property
    def samples(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.states.shape[1] - 1

    def header(self) -> dict:
        return {
            "seed": self.seed,
            "dt": self.dt,
            "steps": self.steps,
            "samples": self.samples,
            "model_hash": self.model_hash,
            "x0_law": self.x0_law,
        }

    def to_frame(self) -> pd.DataFrame:
        """Long format: sample, step, t, x_1..x_d."""
        n, s, d = self.states.shape
        frame = pd.DataFrame(self.states.reshape(n * s, d), columns=[f"x_{i + 1}" for i in range(d)])
        frame.insert(0, "t", np.tile(self.times, n))
        frame.insert(0, "step", np.tile(np.arange(s), n))
        frame.insert(0, "sample", np.repeat(np.arange(n), s))
        return frame


def simulate_paths(
    m: OUModel,
    g: GramianSet | None,
    x0: np.ndarray | str,
    dt: float,
    steps: int,
    samples: int,
    seed: int,
    keep_noise: bool = False,
) -> PathEnsemble:
    """Exact discretization of dZ = AZdt + √Q dW.

    Args:
        g: may be None for a point start; Q_t then comes from finite_time_gramian.
        x0: a start point, or "stationary" to draw Z_0 ~ N(0, Q_∞) with the
            same symmetric-root factorization.
        keep_noise: retain the standard normal increments (for coupling checks).
    """
    if dt <= 0:
        raise ValueError("Δ must be > 0")
    if steps < 1 or samples < 1:
        raise ValueError("steps and samples must be ≥ 1")
    d = m.dim
    step_map = m.semigroup(dt)
    noise_root = psd_sqrt(g.at(dt) if g is not None else finite_time_gramian(m, dt))
    stationary = isinstance(x0, str)
    if stationary and x0 != "stationary":
        raise ValueError(f"unknown start law {x0!r}")
    if stationary and g is None:
        raise NotStationaryStartError("a stationary start needs Q_∞")
    start_root = psd_sqrt(g.q_inf) if stationary else None
    point = None if stationary else np.asarray(x0, dtype=float)

    def work(block: int, start: int, size: int) -> np.ndarray:
        rng = _block_rng(seed, _TAG_PATHS, block)
        z0 = rng.standard_normal((size, d)) @ start_root if stationary else np.tile(point, (size, 1))
        eta = rng.standard_normal((steps, size, d))
        out = np.empty((size, steps + 1, 2 * d if keep_noise else d))
        z = z0
        out[:, 0, :d] = z
        for k in range(steps):
            z = z @ step_map.T + eta[k] @ noise_root
            out[:, k + 1, :d] = z
        if keep_noise:
            out[:, 0, d:] = 0.0
            out[:, 1:, d:] = np.moveaxis(eta, 0, 1)
        return out

    data = _parallel_blocks(samples, work)
    times = dt * np.arange(steps + 1)
    logger.debug("Simulated %d paths × %d steps (Δ=%.3g, start=%s)", samples, steps, dt, "stationary" if stationary else "point")
    return PathEnsemble(
        times=times,
        states=data[..., :d],
        seed=seed,
        model_hash=m.digest,
        dt=dt,
        x0_law="stationary" if stationary else "point",
        noise=data[:, 1:, d:] if keep_noise else None,
    )


def coupling_discrepancy(m: OUModel, g: GramianSet, b: OperatorBundle, ensemble: PathEnsemble) -> float:
    """max |Q^{-1/2}Z_k − Z̃_k| where Z̃ runs with drift A_Q and the same noise.

    Z̃_{k+1} = S_Q(Δ)Z̃_k + Q^{-1/2}Q_Δ^{1/2}η_k, started at Q^{-1/2}Z_0.
    """
    if ensemble.noise is None:
        raise ValueError("ensemble was simulated without keep_noise")
    step_map = b.s_q(ensemble.dt)
    noise_map = b.q_half_inv @ psd_sqrt(g.at(ensemble.dt))
    z = ensemble.states[:, 0, :] @ b.q_half_inv
    worst = 0.0
    for k in range(ensemble.steps):
        z = z @ step_map.T + ensemble.noise[:, k, :] @ noise_map.T
        target = ensemble.states[:, k + 1, :] @ b.q_half_inv
        worst = max(worst, float(np.max(np.abs(z - target))))
    return worst


# ── Detailed balance ─────────────────────────────────────────────────


@dataclass
class DetailedBalanceResult:
    z: float
    difference: float
    stderr: float
    samples: int

    def to_dict(self) -> dict:
        return {"z": self.z, "difference": self.difference, "stderr": self.stderr, "samples": self.samples}


def test_detailed_balance(
    ensemble: PathEnsemble,
    phi: Callable[[np.ndarray], np.ndarray],
    psi: Callable[[np.ndarray], np.ndarray],
) -> DetailedBalanceResult:
    """Studentized E[ψ(Z₀)φ(Z_Δ)] − E[φ(Z₀)ψ(Z_Δ)] from a stationary one-step ensemble."""
    if ensemble.x0_law != "stationary":
        raise NotStationaryStartError("detailed balance needs x0-law=stationary")
    z0, z1 = ensemble.states[:, 0, :], ensemble.states[:, 1, :]
    diff = np.asarray(psi(z0)) * np.asarray(phi(z1)) - np.asarray(phi(z0)) * np.asarray(psi(z1))
    n = diff.size
    mean = float(diff.mean())
    stderr = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    if stderr == 0.0:
        z = 0.0 if mean == 0.0 else math.copysign(float("inf"), mean)
    else:
        z = mean / stderr
    return DetailedBalanceResult(z=z, difference=mean, stderr=stderr, samples=n)


test_detailed_balance.__test__ = False  # not a pytest test despite the name


def analytic_cross_asymmetry(m: OUModel, g: GramianSet, dt: float) -> np.ndarray:
    """C − Cᵀ for the stationary lag-Δ cross-covariance C = S(Δ)Q_∞."""
    c = m.semigroup(dt) @ g.q_inf
    return c - c.T


def empirical_cross_covariance(ensemble: PathEnsemble, lag: int = 1) -> np.ndarray:
    """E[Z_lag Z_0ᵀ] estimated from the ensemble."""
    z0, z1 = ensemble.states[:, 0, :], ensemble.states[:, lag, :]
    return z1.T @ z0 / ensemble.samples


# ── Decay rate ───────────────────────────────────────────────────────


@dataclass
class DecayEstimate:
    rate: float
    method: str
    times: list[float]
    norms: list[float]
    local_rates: list[float]

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "method": self.method,
            "times": self.times,
            "norms": self.norms,
            "local_rates": self.local_rates,
        }


def _fit_rate(times: list[float], norms: list[float]) -> tuple[float, list[float]]:
    logs = np.log(np.asarray(norms))
    slope = np.polyfit(np.asarray(times), logs, 1)[0]
    local = [-(logs[i + 1] - logs[i]) / (times[i + 1] - times[i]) for i in range(len(times) - 1)]
    return float(-slope), [float(v) for v in local]


def estimate_decay_rate(
    m: OUModel,
    g: GramianSet,
    b: OperatorBundle,
    phi: PolynomialObservable,
    t_grid: list[float],
    samples: int | None = None,
    seed: int | None = None,
) -> DecayEstimate:
    """Fit β̂ = −slope of log ‖R_tφ − Π₀φ‖₂ against t.

    With ``samples`` the norms come from Monte Carlo,
    ‖R_tψ‖₂² = E[ψ(Z₀)ψ(Z_{2t})] under the stationary start (ψ = φ − Π₀φ);
    otherwise from the chaos coefficients.
    """
    if len(t_grid) < 2:
        raise ValueError("need at least two times")
    c = expand(phi, b, g).without_mean()
    if not c.coeffs:
        raise ValueError("φ is constant; no decay to estimate")

    if samples is None:
        norms = [apply_Rt_spectral(c, b, t).l2_norm() for t in t_grid]
        rate, local = _fit_rate(list(t_grid), norms)
        return DecayEstimate(rate, "spectral", list(map(float, t_grid)), norms, local)

    seed = config.DEFAULT_SEED if seed is None else seed
    start_root = psd_sqrt(g.q_inf)
    norms = []
    for j, t in enumerate(t_grid):
        lag = 2.0 * t
        step_map = m.semigroup(lag)
        noise_root = psd_sqrt(finite_time_gramian(m, lag, g.q_inf))

        def work(block: int, start: int, size: int, j=j, step_map=step_map, noise_root=noise_root) -> np.ndarray:
            rng = _block_rng(seed, _TAG_DECAY, block * 1024 + j)
            z0 = rng.standard_normal((size, m.dim)) @ start_root
            z1 = z0 @ step_map.T + rng.standard_normal((size, m.dim)) @ noise_root
            return (c(z0) * c(z1))[:, None]

        products = _parallel_blocks(samples, work)
        norms.append(math.sqrt(max(float(products.mean()), 1e-300)))
    rate, local = _fit_rate(list(t_grid), norms)
    return DecayEstimate(rate, "monte-carlo", list(map(float, t_grid)), norms, local)
