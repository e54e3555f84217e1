"""Report pipeline nodes. Each takes the ReportState and returns a partial update."""
from __future__ import annotations

import math


def make_check(name: str, passed: bool, value: float | None, threshold: float | None) -> dict:
    """One entry of ReportState.checks."""
    def _num(v):
        if v is None:
            return None
        v = float(v)
        return v if math.isfinite(v) else str(v)

    return {"name": name, "passed": bool(passed), "value": _num(value), "threshold": _num(threshold)}
