from __future__ import annotations

import logging
import time as _time
import uuid

from langgraph.graph import END, START, StateGraph

from brain.nodes.auditor import audit
from brain.nodes.deliverer import deliver
from brain.nodes.diagnostics import run_diagnostics
from brain.nodes.gramian import solve_gramians
from brain.nodes.hypothesis import check_hypothesis
from brain.nodes.sobolev import run_sobolev
from brain.nodes.symmetry import check_symmetry
from brain.state import ReportState
from storage.artifacts import RunManifest

logger = logging.getLogger(__name__)


def _wrap_node(name: str, func):
    """Wrap a node function to record its duration in stage_timings."""
    def wrapper(state: ReportState) -> dict:
        t0 = _time.time()
        result = func(state)
        elapsed_ms = int((_time.time() - t0) * 1000)
        timings = list(state.get("stage_timings", []))
        timings.append({"name": name, "duration_ms": elapsed_ms})
        result["stage_timings"] = timings
        logger.debug("Stage %s finished in %d ms", name, elapsed_ms)
        return result
    return wrapper


def after_hypothesis(state: ReportState) -> str:
    return "gramian" if state["hypothesis"].holds else "audit"


def after_gramian(state: ReportState) -> str:
    return "symmetry" if state["gramians"] is not None else "audit"


def after_symmetry(state: ReportState) -> str:
    """Symmetric-only stages need the bundle; the weighted-heat truncation runs its own diagnostics."""
    if state["bundle"] is not None:
        return "diagnostics"
    if state["model"].kind == "example2" and state["symmetry"].is_symmetric:
        return "diagnostics"
    return "audit"


def after_diagnostics(state: ReportState) -> str:
    return "sobolev" if state["bundle"] is not None else "audit"


def build_graph():
    """Build and compile the report graph.

    Flow: hypothesis → gramian → symmetry → diagnostics → sobolev → audit → deliver,
    short-circuiting to audit when a stage has nothing to hand on.
    """
    graph = StateGraph(ReportState)

    graph.add_node("hypothesis", _wrap_node("hypothesis", check_hypothesis))
    graph.add_node("gramian", _wrap_node("gramian", solve_gramians))
    graph.add_node("symmetry", _wrap_node("symmetry", check_symmetry))
    graph.add_node("diagnostics", _wrap_node("diagnostics", run_diagnostics))
    graph.add_node("sobolev", _wrap_node("sobolev", run_sobolev))
    graph.add_node("audit", _wrap_node("audit", audit))
    graph.add_node("deliver", _wrap_node("deliver", deliver))

    graph.add_edge(START, "hypothesis")
    graph.add_conditional_edges("hypothesis", after_hypothesis, {"gramian": "gramian", "audit": "audit"})
    graph.add_conditional_edges("gramian", after_gramian, {"symmetry": "symmetry", "audit": "audit"})
    graph.add_conditional_edges("symmetry", after_symmetry, {"diagnostics": "diagnostics", "audit": "audit"})
    graph.add_conditional_edges("diagnostics", after_diagnostics, {"sobolev": "sobolev", "audit": "audit"})
    graph.add_edge("sobolev", "audit")
    graph.add_edge("audit", "deliver")
    graph.add_edge("deliver", END)

    return graph.compile()


# Singleton compiled graph
report_graph = build_graph()


def run_report(model, options: dict | None = None, command: str = "report") -> ReportState:
    """Execute the full report pipeline for a model. Returns the final state."""
    options = dict(options or {})
    run_id = options.get("run_id") or f"{model.digest[:12]}-{uuid.uuid4().hex[:8]}"
    initial_state: ReportState = {
        "run_id": run_id,
        "model": model,
        "options": options,
        "hypothesis": None,
        "gramians": None,
        "symmetry": None,
        "bundle": None,
        "diagnostics": {},
        "sobolev": {},
        "checks": [],
        "skipped": [],
        "stage_timings": [],
        "verdict": "",
        "exit_code": 0,
        "report": {},
        "artifacts": [],
        "manifest": RunManifest(command=command, model_hash=model.digest, seed=options.get("seed")),
    }

    logger.info("Starting report pipeline %s for %s (d=%d)", run_id, model.name or "<anon>", model.dim)
    result = report_graph.invoke(initial_state)
    timings = result.get("stage_timings", [])
    timing_str = " ".join(f"{t['name']}:{t['duration_ms']/1000:.1f}s" for t in timings)
    total_ms = sum(t["duration_ms"] for t in timings) if timings else 0
    logger.info(
        "Report %s completed in %.1fs [%s] verdict=%s",
        run_id, total_ms / 1000, timing_str, result.get("verdict", "?"),
    )
    return result
