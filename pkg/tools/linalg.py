"""Symmetric matrix functions shared by the model, symmetry and simulate layers.

All square roots here are the symmetric (principal) PSD roots. Triangular
factors are never used: the conjugated frames and the coupling test need the
same noise expressed in both coordinates.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

import config

logger = logging.getLogger(__name__)


class SingularQError(ArithmeticError):
    """Q (or another matrix that must be inverted) is numerically singular."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(np.diagonal(m)))


def spectral_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix; tiny negative eigenvalues are clipped."""
    m = symmetrize(np.asarray(m, dtype=float))
    if is_diagonal(m):
        return np.diag(np.sqrt(np.clip(np.diagonal(m), 0.0, None)))
    w, v = scipy.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def sqrt_pair(m: np.ndarray, floor: float | None = None, name: str = "Q") -> tuple[np.ndarray, np.ndarray]:
    """Return (M^{1/2}, M^{-1/2}) for a symmetric positive definite M.

    Args:
        m: symmetric matrix.
        floor: relative eigenvalue floor; eigenvalues below ``floor * λ_max``
            raise SingularQError. Defaults to config.Q_FLOOR.
        name: label used in the error message.

    Diagonal inputs take an exact path that only requires positive entries.
    """
    floor = config.Q_FLOOR if floor is None else floor
    m = symmetrize(np.asarray(m, dtype=float))
    if is_diagonal(m):
        diag = np.diagonal(m)
        if diag.size and np.min(diag) <= 0.0:
            raise SingularQError(f"{name} has a non-positive diagonal entry ({np.min(diag):.3e})")
        root = np.sqrt(diag)
        return np.diag(root), np.diag(1.0 / root)

    w, v = scipy.linalg.eigh(m)
    lam_max = float(np.max(np.abs(w))) if w.size else 0.0
    if lam_max == 0.0 or np.min(w) < floor * lam_max:
        raise SingularQError(
            f"{name} is numerically singular: λ_min={np.min(w):.3e}, λ_max={lam_max:.3e}, floor={floor:.1e}"
        )
    root = np.sqrt(w)
    return symmetrize((v * root) @ v.T), symmetrize((v / root) @ v.T)


def expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential (scipy Padé scaling-and-squaring)."""
    return scipy.linalg.expm(np.asarray(m, dtype=float))


def sign_normalize_columns(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry above noise level is positive."""
    out = np.array(vecs, dtype=float, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        scale = np.max(np.abs(col)) if col.size else 0.0
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(scale, 1.0))
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out
