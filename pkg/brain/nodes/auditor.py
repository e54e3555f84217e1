from __future__ import annotations

import logging

from brain.state import ReportState

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 2


def audit(state: ReportState) -> dict:
    """Verdict over the hard checks: exit 0 when all passed, 2 otherwise.

    Skipped stages are not failures; an expected-symmetric run on a
    nonsymmetric model fails through its own check.
    """
    failed = [c["name"] for c in state["checks"] if not c["passed"]]
    if not state["checks"]:
        failed = ["no_checks_ran"]
    verdict = "fail" if failed else "pass"
    if failed:
        logger.warning("Audit failed: %s", ", ".join(sorted(set(failed))))
    return {"verdict": verdict, "exit_code": EXIT_CHECK_FAILED if failed else EXIT_OK}
