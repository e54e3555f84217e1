from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

import config
from brain.state import ReportState
from storage.artifacts import write_csv, write_json
from tools.gramian import eigenvalue_table

logger = logging.getLogger(__name__)


def _payload(state: ReportState) -> dict:
    m = state["model"]
    payload = {
        "model": m.summary(),
        "verdict": state["verdict"],
        "exit_code": state["exit_code"],
        "checks": state["checks"],
        "skipped": sorted(set(state["skipped"])),
    }
    if state["hypothesis"] is not None:
        payload["hypothesis"] = state["hypothesis"].to_dict()
    if state["symmetry"] is not None:
        payload["symmetry"] = state["symmetry"].to_dict()
    g = state["gramians"]
    if g is not None:
        payload["gramian"] = {
            "lyapunov_residual": g.lyapunov_residual,
            "q_inf_trace": float(np.trace(g.q_inf)),
            "times": g.times,
        }
    if state["diagnostics"]:
        payload["diagnostics"] = state["diagnostics"]
    if state["sobolev"]:
        payload["sobolev"] = state["sobolev"]
    return payload


def deliver(state: ReportState) -> dict:
    """Write report.json and the Q_t eigenvalue CSV into the run directory."""
    out_dir = Path(state["options"].get("out_dir") or config.OUTPUTS_DIR) / state["run_id"]
    manifest = state["manifest"]
    artifacts = list(state["artifacts"])

    g = state["gramians"]
    if g is not None:
        csv_path = write_csv(out_dir / "gramian_eigenvalues.csv", eigenvalue_table(g, g.times), manifest)
        artifacts.append(str(csv_path))

    payload = _payload(state)
    manifest.finish()
    report_path = write_json(out_dir / "report.json", payload, manifest)
    artifacts.append(str(report_path))
    logger.debug("Delivered %d artifacts to %s", len(artifacts), out_dir)
    return {"report": payload, "artifacts": artifacts}
