from __future__ import annotations

from typing import Any, TypedDict


class ReportState(TypedDict):
    # Input
    run_id: str
    model: Any  # OUModel
    options: dict  # seed, tol, expect_symmetric, p, samples, out_dir, fmt

    # Stage results (None until the stage ran)
    hypothesis: Any  # HypothesisVerdict
    gramians: Any  # GramianSet
    symmetry: Any  # SymmetryReport
    bundle: Any  # OperatorBundle
    diagnostics: dict
    sobolev: dict

    # Checks: {name, passed, value, threshold}
    checks: list[dict]
    skipped: list[str]

    # Per-node timing
    stage_timings: list[dict]

    # Audit
    verdict: str  # "pass" | "fail"
    exit_code: int

    # Output
    report: dict
    artifacts: list[str]
    manifest: Any  # RunManifest
