from __future__ import annotations

import logging

import config
from brain.nodes import make_check
from brain.state import ReportState
from tools.gramian import (
    NoUniqueSolutionError,
    build_gramians,
    identity_residual,
    kernel_inclusion_residual,
    monotonicity_margin,
)
from tools.linalg import spectral_norm

logger = logging.getLogger(__name__)

# quad_vec cross-check of Q_t gets slow beyond this dimension
_QUADRATURE_CHECK_MAX_DIM = 16


def solve_gramians(state: ReportState) -> dict:
    """Q_∞ from the Lyapunov equation and Q_t on the default grid, with their sanity checks."""
    m = state["model"]
    checks = list(state["checks"])
    try:
        g = build_gramians(m)
    except NoUniqueSolutionError as e:
        logger.warning("Gramian stage failed: %s", e)
        checks.append(make_check("lyapunov_unique", False, None, None))
        return {"gramians": None, "checks": checks}

    scale = spectral_norm(g.q_inf)
    margin = monotonicity_margin(g)
    kernel = kernel_inclusion_residual(g)
    checks += [
        make_check("lyapunov_residual", g.lyapunov_residual <= config.LYAPUNOV_TOL,
                   g.lyapunov_residual, config.LYAPUNOV_TOL),
        make_check("qt_monotone", margin >= -1e-12 * scale, margin, -1e-12 * scale),
        make_check("kernel_inclusion", kernel <= 1e-8, kernel, 1e-8),
    ]
    skipped = list(state["skipped"])
    if m.dim <= _QUADRATURE_CHECK_MAX_DIM and m.kind != "example2":
        ident = identity_residual(g)
        checks.append(make_check("qt_identity", ident <= 1e-8, ident, 1e-8))
    else:
        skipped.append("qt_identity")
    return {"gramians": g, "checks": checks, "skipped": skipped}
