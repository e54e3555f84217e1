"""Tensorized Gauss-Hermite quadrature against Gaussian measures.

Nodes are the probabilists' Hermite nodes (weight e^{-x²/2}) with weights
normalized to sum to one, so ``Σ w f(x) ≈ E f(ξ)`` for ξ ~ N(0, I).
An n-node rule per axis is exact for polynomials of degree ≤ 2n − 1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg
from numpy.polynomial import hermite_e

import config

logger = logging.getLogger(__name__)

_CHUNK = 1 << 18
_MAX_POINTS = 1 << 23


class QuadratureOrderTooLowError(ValueError):
    """Polynomial degree exceeds the exactness order of the rule."""


class QuadratureDimensionError(ValueError):
    """Tensor rule requested above the supported dimension."""


def _ram_below_threshold(percent: int) -> bool:
    """True if current RAM usage is below the given percentage."""
    try:
        import psutil
        return psutil.virtual_memory().percent < percent
    except ImportError:
        return True


@lru_cache(maxsize=64)
def gauss_hermite_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point rule for N(0,1): (nodes, weights) with Σ weights = 1."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = hermite_e.hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


def tensor_rule(dim: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on ℝ^dim: nodes (n^dim, dim), weights (n^dim,)."""
    if dim > config.GH_MAX_DIM:
        raise QuadratureDimensionError(
            f"tensor Gauss-Hermite refused in dimension {dim} (limit {config.GH_MAX_DIM}); use monte-carlo"
        )
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    if n ** dim > _MAX_POINTS:
        raise QuadratureDimensionError(f"{n}^{dim} nodes exceeds the tensor grid limit")
    if not _ram_below_threshold(config.RAM_THRESHOLD_PERCENT):
        raise MemoryError("RAM usage above threshold, refusing to build tensor grid")
    x, w = gauss_hermite_rule(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def covariance_factor(cov: np.ndarray, rel_tol: float = 1e-15) -> np.ndarray:
    """Return F (d×r) with F Fᵀ = cov, dropping null directions."""
    cov = np.asarray(cov, dtype=float)
    if cov.size == 0 or not np.any(cov):
        return np.zeros((cov.shape[0], 0))
    w, v = scipy.linalg.eigh(0.5 * (cov + cov.T))
    keep = w > rel_tol * max(float(np.max(w)), 0.0)
    return v[:, keep] * np.sqrt(w[keep])


def gaussian_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    mean: np.ndarray,
    cov: np.ndarray,
    n_nodes: int | None = None,
    degree: int | None = None,
) -> float:
    """E f(X) for X ~ N(mean, cov) by tensor Gauss-Hermite.

    Args:
        f: vectorized integrand, points (N, d) → values (N,).
        mean: d-vector.
        cov: d×d PSD matrix; null directions are integrated exactly.
        n_nodes: nodes per axis (default config.GH_NODES).
        degree: polynomial degree of f if known; checked against exactness.

    Raises:
        QuadratureOrderTooLowError: degree > 2·n_nodes − 1.
        QuadratureDimensionError: rank of cov above config.GH_MAX_DIM.
    """
    n = n_nodes or config.GH_NODES
    if degree is not None and degree > 2 * n - 1:
        raise QuadratureOrderTooLowError(f"degree {degree} needs more than {n} nodes per axis")
    mean = np.asarray(mean, dtype=float)
    factor = covariance_factor(cov)
    rank = factor.shape[1]
    if rank == 0:
        return float(np.asarray(f(mean[None, :]))[0])
    nodes, weights = tensor_rule(rank, n)
    total = 0.0
    for start in range(0, len(weights), _CHUNK):
        pts = mean + nodes[start:start + _CHUNK] @ factor.T
        total += float(np.asarray(f(pts)) @ weights[start:start + _CHUNK])
    return total


@dataclass
class RefinedExpectation:
    """Result of a node-doubling refinement."""

    value: float
    nodes: int
    converged: bool
    last_change: float


def refine_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    mean: np.ndarray,
    cov: np.ndarray,
    n_start: int | None = None,
    tol: float | None = None,
    max_nodes: int | None = None,
) -> RefinedExpectation:
    """Double the node count until two successive values agree to ``tol``.

    Agreement is measured as |I_2n − I_n| ≤ tol · max(1, |I_2n|).
    """
    n = n_start or config.GH_NODES
    tol = config.LP_REFINE_TOL if tol is None else tol
    max_nodes = max_nodes or config.LP_MAX_NODES
    rank = covariance_factor(cov).shape[1]
    previous = gaussian_expectation(f, mean, cov, n)
    change = float("inf")
    while 2 * n <= max_nodes and (2 * n) ** max(rank, 1) <= _MAX_POINTS:
        n *= 2
        current = gaussian_expectation(f, mean, cov, n)
        change = abs(current - previous)
        previous = current
        if change <= tol * max(1.0, abs(current)):
            return RefinedExpectation(value=current, nodes=n, converged=True, last_change=change)
    logger.warning("Quadrature refinement stopped at %d nodes/axis, last change %.2e", n, change)
    return RefinedExpectation(value=previous, nodes=n, converged=False, last_change=change)
