"""Named models: the two worked examples, the fractional family and registry lookups."""
from __future__ import annotations

import logging

import numpy as np
import scipy.stats

from tools.model import OUModel, load_model
from tools.registry import UnknownPresetError, resolve_preset
from tools.weighted_heat import GridTooCoarseError, discretize, refinement_study

logger = logging.getLogger(__name__)

__all__ = [
    "GridTooCoarseError",
    "UnknownPresetError",
    "preset",
    "preset_example1",
    "preset_example2",
    "preset_fractional",
]


def preset(name: str, **overrides) -> OUModel:
    """Materialize a registry preset, e.g. preset("example1", N=64)."""
    return load_model(resolve_preset(name, overrides), name=name)


def preset_example1(n: int) -> OUModel:
    """α_k = −1/k, q_k = k^{-3} for k ≤ N; Q_∞ = ½A², A_Q = A and gap 1/N."""
    if n < 1:
        raise ValueError("N must be ≥ 1")
    return preset("example1", N=int(n))


def preset_example2(kappa: float, m: float, halfwidth: float | None = None, n: int = 512) -> OUModel:
    """Dirichlet-truncated weighted heat equation in the weighted orthonormal frame.

    When the harmonic direction exists (m < κ²/4) its residual is checked on
    the requested grid and two refinements before the model is returned.

    Raises:
        GridTooCoarseError: harmonic residual above EXAMPLE2_HARMONIC_TOL.
    """
    grid = discretize(kappa, m, halfwidth, n)
    if grid.harmonic:
        refinement_study(grid)
    return load_model(
        {"kind": "example2", "kappa": kappa, "m": m, "halfwidth": grid.halfwidth, "n": n},
        name="example2",
    )


def preset_fractional(n: int, exponent: float = 0.25, seed: int | None = None) -> OUModel:
    """A = A* with spectrum −1, −4, …, −n², Q = (−A)^{-2·exponent}.

    With ``seed`` the pair is rotated by a Haar-random orthogonal matrix so
    the dense solvers are exercised; Q_∞ = ½(−A)^{-1-2·exponent} either way.
    """
    if n < 1:
        raise ValueError("n must be ≥ 1")
    eig = np.arange(1, n + 1, dtype=float) ** 2
    a = np.diag(-eig)
    q = np.diag(eig ** (-2.0 * exponent))
    if seed is not None and n > 1:
        r = scipy.stats.ortho_group.rvs(n, random_state=seed)
        a = r @ a @ r.T
        q = r @ q @ r.T
        a = 0.5 * (a + a.T)
        q = 0.5 * (q + q.T)
    return OUModel(a=a, q=q, kind="dense", name="fractional-selfadjoint",
                   params={"exponent": exponent, "N": n})


def fractional_q_inf(m: OUModel) -> np.ndarray:
    """Closed form ½(−A)^{-1-2·exponent} for a fractional preset."""
    w, v = np.linalg.eigh(-0.5 * (m.a + m.a.T))
    exponent = float(m.params["exponent"])
    return (v * (0.5 * w ** (-1.0 - 2.0 * exponent))) @ v.T
