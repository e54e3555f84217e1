from __future__ import annotations

import logging

from brain.nodes import make_check
from brain.state import ReportState
from tools.model import validate_hypothesis

logger = logging.getLogger(__name__)


def check_hypothesis(state: ReportState) -> dict:
    """Evaluate the standing hypothesis; a failure routes straight to audit."""
    verdict = validate_hypothesis(state["model"])
    if not verdict.holds:
        logger.warning("Hypothesis fails for %s: %s", state["model"].name or "<anon>", verdict.note)
    check = make_check("hypothesis", verdict.holds, verdict.trace_integral, None)
    return {"hypothesis": verdict, "checks": [*state["checks"], check]}
