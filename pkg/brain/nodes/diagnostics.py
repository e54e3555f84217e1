from __future__ import annotations

import logging
import math

import numpy as np

from brain.nodes import make_check
from brain.state import ReportState
from tools.mehler import SingularQtError, gradient_matrix_norm
from tools.polynomial import PolynomialObservable
from tools.simulate import estimate_decay_rate
from tools.spaces import semigroup_diagnostics
from tools.weighted_heat import discretize, weighted_heat_report

logger = logging.getLogger(__name__)


def _weighted_heat(state: ReportState) -> dict:
    m = state["model"]
    opts = state["options"]
    p = m.params
    grid = discretize(p["kappa"], p["m"], p["halfwidth"], int(p["n"]))
    report = weighted_heat_report(grid, samples=opts.get("samples") or 10_000, seed=opts.get("seed"))
    checks = [make_check(f"example2.{c['name']}", c["passed"], c["value"], c["threshold"]) for c in report.checks]
    return {"diagnostics": {"example2": report.to_dict()}, "checks": [*state["checks"], *checks]}


def run_diagnostics(state: ReportState) -> dict:
    """Spectral gap, Hilbert-Schmidt trace identity, gradient matrix bound and L² decay rate."""
    m = state["model"]
    if m.kind == "example2":
        return _weighted_heat(state)

    g, b = state["gramians"], state["bundle"]
    checks = list(state["checks"])
    report = semigroup_diagnostics(m, g, b)
    checks += [
        make_check("spectral_gap_positive", report.gap > 0, report.gap, 0.0),
        make_check("hs_trace_identity", report.trace_identity_residual <= 1e-6, report.trace_identity_residual, 1e-6),
    ]

    t_grid = list(np.geomspace(0.01, 10.0, 10) / b.gap)
    values = {}
    for t in t_grid:
        try:
            values[float(t)] = gradient_matrix_norm(m, g, b, t) * math.sqrt(t)
        except SingularQtError as e:
            logger.debug("Gradient bound skipped at t=%.3g: %s", t, e)
    worst = max(values.values(), default=0.0)
    checks.append(make_check("gradient_matrix_bound", worst <= 1.0 + 1e-12, worst, 1.0))

    bottom = PolynomialObservable.linear(b.whitening[0])
    decay = estimate_decay_rate(m, g, b, bottom, [0.0, 0.5 / b.gap, 1.0 / b.gap])
    decay_err = abs(decay.rate - b.gap) / max(1.0, b.gap)
    checks.append(make_check("decay_rate", decay_err <= 1e-6, decay.rate, b.gap))

    out = {
        "diagnostics": report.to_dict(),
        "gradient_matrix": {f"{t:.6g}": v for t, v in values.items()},
        "decay": decay.to_dict(),
        "beta": b.beta.tolist(),
        "bundle_residuals": b.residuals,
    }
    logger.info("Diagnostics: gap=%.6g, HS residual %.2e", report.gap, report.trace_identity_residual)
    return {"diagnostics": out, "checks": checks}
