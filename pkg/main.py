from __future__ import annotations

import argparse
import json
import logging
import logging.handlers
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import config  # must load .env before other imports

logger = logging.getLogger("ousym")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CHECK_FAILED = 2


def _configure_logging(verbosity: int) -> None:
    """Stream + rotating file handlers (10MB max, 3 backups); -v → DEBUG, -q → WARNING."""
    level = logging.DEBUG if verbosity > 0 else logging.WARNING if verbosity < 0 else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[
            logging.StreamHandler(sys.stderr),
            logging.handlers.RotatingFileHandler(
                config.LOG_PATH,
                maxBytes=10_000_000,
                backupCount=3,
            ),
        ],
        force=True,
    )


# Imported after config so .env overrides are in place
from storage.artifacts import RunManifest, dumps, write_csv, write_ensemble, write_json  # noqa: E402
from storage.db import list_runs, prune_runs, record_run  # noqa: E402
from tools.model import OUModel, load_model, validate_hypothesis  # noqa: E402
from tools.polynomial import PolynomialObservable  # noqa: E402


@dataclass
class Outcome:
    exit_code: int
    verdict: str
    model: OUModel | None = None
    report_path: str = ""
    stage_timings: list[dict] | None = None


# ── Argument helpers ─────────────────────────────────────────────────


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _load(args) -> OUModel:
    """Model from --preset (with overrides) or from the positional document path."""
    if args.preset:
        from tools.presets import preset

        overrides = {k: getattr(args, k) for k in ("N", "kappa", "m", "halfwidth", "n")}
        return preset(args.preset, **{k: v for k, v in overrides.items() if v is not None})
    if not args.model:
        raise ValueError("a model document path or --preset NAME is required")
    return load_model(Path(args.model))


def _observable(args, dim: int) -> PolynomialObservable:
    """--observable as a path or inline JSON document; defaults to x_1."""
    if not args.observable:
        return PolynomialObservable.coordinate(dim, 0)
    text = args.observable
    if not text.lstrip().startswith("{"):
        text = Path(text).read_text(encoding="utf-8")
    return PolynomialObservable.from_document(json.loads(text), dim=dim)


def _point(args, dim: int) -> np.ndarray:
    if args.x is None:
        return np.ones(dim)
    x = np.asarray(args.x, dtype=float)
    if x.size != dim:
        raise ValueError(f"--x has {x.size} entries, model has d={dim}")
    return x


def _out_path(args, command: str, m: OUModel, suffix: str = ".json") -> Path:
    out = Path(args.out) if args.out else config.OUTPUTS_DIR
    return out / f"{command}_{m.digest[:12]}{suffix}"


def _emit(args, command: str, m: OUModel, payload: dict, manifest: RunManifest) -> str:
    """Write the JSON report and echo it on stdout."""
    manifest.finish()
    path = write_json(_out_path(args, command, m), payload, manifest)
    print(dumps(payload))
    return str(path)


def _gramians(m: OUModel, t_grid: list[float]):
    """GramianSet when Q_∞ exists, otherwise None; the Q_t-only operations accept None."""
    from tools.gramian import build_gramians

    if not m.is_hurwitz:
        logger.info("A is not Hurwitz; skipping Q_∞ and working from Q_t only")
        return None
    return build_gramians(m, t_grid)


def _bundle(m: OUModel, tol: float | None = None):
    from tools.gramian import build_gramians
    from tools.symmetry import build_operator_bundle, check_reversibility

    g = build_gramians(m)
    report = check_reversibility(m, tol=tol)
    return g, report, build_operator_bundle(m, g, report)


# ── Commands ─────────────────────────────────────────────────────────


def cmd_check(args) -> Outcome:
    """Hypothesis H and the reversibility criteria (plus the 2×2 classifier when it applies)."""
    from tools.symmetry import check_reversibility, classify_2x2

    m = _load(args)
    manifest = RunManifest("check", m.digest, args.seed)
    hyp = validate_hypothesis(m)
    rep = check_reversibility(m, tol=args.tol)
    payload = {"model": m.summary(), "hypothesis": hyp.to_dict(), "symmetry": rep.to_dict()}

    q = m.q
    if m.dim == 2 and q[0, 1] == 0 and q[1, 0] == 0 and q[0, 0] == 1.0 and q[1, 1] > 0 and q[1, 1] != 1.0:
        a = m.a
        payload["classify_2x2"] = classify_2x2(a[0, 0], a[1, 1], a[0, 1], a[1, 0], q[1, 1])

    failed = not hyp.holds or not rep.criteria_agree or (args.expect_symmetric and not rep.is_symmetric)
    payload["passed"] = not failed
    path = _emit(args, "check", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def cmd_gramian(args) -> Outcome:
    """Q_∞, Q_t on a grid, their residuals and the eigenvalue CSV."""
    from tools.gramian import (
        build_gramians,
        convergence_violation,
        eigenvalue_table,
        identity_residual,
        is_reversible,
        kernel_inclusion_residual,
        monotonicity_margin,
        symmetric_lyapunov_residual,
    )

    m = _load(args)
    manifest = RunManifest("gramian", m.digest, args.seed)
    g = build_gramians(m, args.t_grid)
    tol = args.tol if args.tol is not None else config.LYAPUNOV_TOL
    payload = {
        "model": m.summary(),
        "q_inf": g.q_inf,
        "lyapunov_residual": g.lyapunov_residual,
        "monotonicity_margin": monotonicity_margin(g),
        "convergence_violation": convergence_violation(g),
        "kernel_inclusion_residual": kernel_inclusion_residual(g),
    }
    if m.dim <= 16 and m.kind != "example2":
        payload["identity_residual"] = identity_residual(g)
    failed = g.lyapunov_residual > tol
    if is_reversible(m):
        sym = symmetric_lyapunov_residual(m, g.q_inf)
        payload["symmetric_lyapunov_residual"] = sym
        failed = failed or sym > tol

    write_csv(_out_path(args, "gramian_eigenvalues", m, ".csv"), eigenvalue_table(g, g.times), manifest)
    payload["passed"] = not failed
    path = _emit(args, "gramian", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def cmd_gap(args) -> Outcome:
    """Spectral gap of −A_Q, the −L spectrum up to degree 2 and the range ratios."""
    from tools.chaos import generator_spectrum
    from tools.spaces import qt_qinf_ratios
    from tools.symmetry import contraction_sharpness, range_ratios, residual_time_grid

    m = _load(args)
    manifest = RunManifest("gap", m.digest, args.seed)
    g, rep, b = _bundle(m, args.tol)
    t = 1.0 / m.scale
    sharp = contraction_sharpness(b, residual_time_grid(m))
    payload = {
        "model": m.summary(),
        "spectral_gap": b.gap,
        "beta": b.beta,
        "generator_spectrum": generator_spectrum(b, 2)[:50],
        "bundle_residuals": b.residuals,
        "contraction_sharpness": sharp,
        "range_ratios": list(range_ratios(b, g, t)),
        "qt_qinf_ratios": list(qt_qinf_ratios(g, t)),
    }
    failed = b.max_residual > config.BUNDLE_TOL or sharp > config.BUNDLE_TOL
    payload["passed"] = not failed
    path = _emit(args, "gap", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def cmd_mehler(args) -> Outcome:
    """R_tφ(x) by the requested method, compared with the spectral value on symmetric models."""
    from tools.chaos import apply_Rt_spectral, expand
    from tools.mehler import evaluate_Rt
    from tools.symmetry import build_operator_bundle, check_reversibility

    m = _load(args)
    manifest = RunManifest("mehler", m.digest, args.seed)
    phi = _observable(args, m.dim)
    x = _point(args, m.dim)
    g = _gramians(m, [args.t])
    est = evaluate_Rt(m, g, phi, x, args.t, method=args.method, n_nodes=args.nodes,
                      samples=args.samples or 100_000, seed=args.seed)
    payload = {
        "model": m.summary(),
        "t": args.t,
        "x": x,
        "observable": phi.to_document(),
        "estimate": {"value": est.value, "stderr": est.stderr, "method": est.method,
                     "nodes": est.nodes, "samples": est.samples},
    }
    failed = False
    rep = check_reversibility(m, tol=args.tol)
    if g is None:
        payload["skipped"] = ["spectral_value"]
    elif rep.is_symmetric and m.kind != "example2":
        b = build_operator_bundle(m, g, rep)
        chaos = expand(phi, b, g)
        spectral = float(apply_Rt_spectral(chaos, b, args.t)(x[None, :])[0])
        diff = abs(est.value - spectral)
        if est.method == "monte-carlo":
            failed = diff > config.MC_Z_THRESHOLD * est.stderr
        else:
            failed = diff > 1e-8 * max(1.0, abs(spectral))
        payload["spectral_value"] = spectral
        payload["difference"] = diff
        write_csv(_out_path(args, "chaos", m, ".csv"), chaos.to_frame(), manifest)
    payload["passed"] = not failed
    path = _emit(args, "mehler", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def cmd_sobolev(args) -> Outcome:
    """Gauss-Sobolev norms and Meyer ratios of one observable."""
    from tools.spaces import p2_identity_residual, pointwise_identities, sobolev_norms

    m = _load(args)
    manifest = RunManifest("sobolev", m.digest, args.seed)
    phi = _observable(args, m.dim)
    g, _, b = _bundle(m, args.tol)
    rep = sobolev_norms(phi, m, g, b, args.p)
    rng = np.random.default_rng(args.seed)
    points = rng.standard_normal((100, m.dim)) @ b.qinf_half
    pointwise = pointwise_identities(phi, m, b, points)
    payload = {"model": m.summary(), "sobolev": rep.to_dict(), "pointwise": pointwise}
    failed = any(pointwise[k] > 1e-9 for k in ("first", "second", "mixed"))
    if args.p == 2:
        ident = p2_identity_residual(phi, g, b)
        payload["p2_identity_residual"] = ident
        failed = failed or ident > 1e-9
    payload["passed"] = not failed
    path = _emit(args, "sobolev", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def cmd_simulate(args) -> Outcome:
    """Exact path ensemble; stationary starts also get the detailed-balance test."""
    from tools.simulate import analytic_cross_asymmetry, simulate_paths, test_detailed_balance

    m = _load(args)
    manifest = RunManifest("simulate", m.digest, args.seed)
    g = _gramians(m, [args.dt])
    x0 = "stationary" if args.x0 == "stationary" else np.asarray(_floats(args.x0))
    if g is None and isinstance(x0, str):
        hyp = validate_hypothesis(m)
        payload = {"model": m.summary(), "hypothesis": hyp.to_dict(), "skipped": ["ensemble"], "passed": False}
        logger.warning("No invariant measure for %s; a stationary start is undefined", m.name or m.digest[:12])
        path = _emit(args, "simulate", m, payload, manifest)
        return Outcome(EXIT_CHECK_FAILED, "fail", m, path)
    samples = args.samples or 100_000
    ens = simulate_paths(m, g, x0, args.dt, args.steps, samples, args.seed)
    fmt = "csv" if args.format == "csv" else "parquet"
    write_ensemble(_out_path(args, "ensemble", m, ".parquet"), ens, manifest, fmt=fmt)

    payload = {"model": m.summary(), "ensemble": ens.header()}
    failed = False
    if ens.x0_law == "stationary" and m.dim >= 2:
        db = test_detailed_balance(ens, lambda z: z[:, 0], lambda z: z[:, 1])
        asym = analytic_cross_asymmetry(m, g, args.dt)
        payload["detailed_balance"] = db.to_dict()
        payload["analytic_difference"] = float(asym[0, 1])
        rejected = abs(db.z) > config.MC_Z_THRESHOLD
        payload["rejected"] = rejected
        failed = bool(args.expect_symmetric and rejected)
    payload["passed"] = not failed
    path = _emit(args, "simulate", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def cmd_diagnostics(args) -> Outcome:
    from tools.spaces import semigroup_diagnostics

    m = _load(args)
    manifest = RunManifest("diagnostics", m.digest, args.seed)
    g, _, b = _bundle(m, args.tol)
    rep = semigroup_diagnostics(m, g, b)
    failed = rep.trace_identity_residual > 1e-6
    payload = {"model": m.summary(), "diagnostics": rep.to_dict(), "passed": not failed}
    path = _emit(args, "diagnostics", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def _report_options(args) -> dict:
    return {
        "seed": args.seed,
        "tol": args.tol,
        "expect_symmetric": args.expect_symmetric,
        "samples": args.samples,
        "p": args.p,
        "out_dir": args.out,
        "fmt": args.format,
    }


def cmd_report(args) -> Outcome:
    """Full report pipeline."""
    from brain.graph import run_report

    m = _load(args)
    options = {**_report_options(args), "run_id": f"report_{m.digest[:12]}"}
    state = run_report(m, options)
    print(dumps(state["report"]))
    path = state["artifacts"][-1] if state["artifacts"] else ""
    return Outcome(state["exit_code"], state["verdict"], m, path, state["stage_timings"])


def cmd_example1(args) -> Outcome:
    """Diagonal example: Q_∞ = ½A², A_Q = A, gap 1/N, plus the sequence predicates."""
    from tools.presets import preset_example1
    from tools.spaces import semigroup_diagnostics

    n = args.N or 32
    m = preset_example1(n)
    manifest = RunManifest("example1", m.digest, args.seed)
    g, _, b = _bundle(m, args.tol)
    qinf_err = float(np.max(np.abs(g.q_inf - 0.5 * m.a @ m.a)))
    aq_err = float(np.max(np.abs(b.a_q - m.a)))
    gap_err = abs(b.gap - 1.0 / n)
    diag = semigroup_diagnostics(m, g, b)
    checks = {
        "q_inf_half_a_squared": qinf_err <= 1e-14,
        "a_q_equals_a": aq_err <= 1e-14,
        "gap_one_over_n": gap_err <= 1e-12,
        "hs_trace_identity": diag.trace_identity_residual <= 1e-6,
    }
    payload = {
        "model": m.summary(),
        "q_inf_error": qinf_err,
        "a_q_error": aq_err,
        "spectral_gap": b.gap,
        "diagnostics": diag.to_dict(),
        "checks": checks,
    }
    failed = not all(checks.values())
    payload["passed"] = not failed
    path = _emit(args, "example1", m, payload, manifest)
    return Outcome(EXIT_CHECK_FAILED if failed else EXIT_OK, "fail" if failed else "pass", m, path)


def cmd_example2(args) -> Outcome:
    """Weighted heat equation checks on the Dirichlet truncation."""
    from tools.registry import resolve_preset
    from tools.weighted_heat import discretize, weighted_heat_report

    doc = resolve_preset("example2", {k: getattr(args, k) for k in ("kappa", "m", "halfwidth", "n")})
    grid = discretize(float(doc["kappa"]), float(doc["m"]), doc.get("halfwidth"), int(doc["n"]))
    m = load_model({**doc, "halfwidth": grid.halfwidth}, name="example2")
    manifest = RunManifest("example2", m.digest, args.seed)
    report = weighted_heat_report(grid, samples=args.samples or 10_000, seed=args.seed)
    payload = {"model": m.summary(), "example2": report.to_dict(), "passed": report.passed}
    path = _emit(args, "example2", m, payload, manifest)
    return Outcome(EXIT_OK if report.passed else EXIT_CHECK_FAILED, "pass" if report.passed else "fail", m, path)


def cmd_history(args) -> Outcome:
    """Recent runs from the ledger."""
    if args.prune is not None:
        prune_runs(args.prune)
    rows = list_runs(limit=args.limit, model_hash=args.model_hash)
    if not rows:
        print("No runs recorded.")
    for r in rows:
        print(
            f"{r['id']:>5}  {r['created_at'][:19]}  {r['command']:<12} {r['model_name'] or '-':<24} "
            f"{(r['model_hash'] or '')[:12]:<12}  exit={r['exit_code']} verdict={r['verdict'] or '-'}"
        )
    return Outcome(EXIT_OK, "")


COMMANDS = {
    "check": cmd_check,
    "gramian": cmd_gramian,
    "gap": cmd_gap,
    "mehler": cmd_mehler,
    "sobolev": cmd_sobolev,
    "simulate": cmd_simulate,
    "diagnostics": cmd_diagnostics,
    "report": cmd_report,
    "example1": cmd_example1,
    "example2": cmd_example2,
    "history": cmd_history,
}


# ── Parser ───────────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", nargs="?", help="model document (JSON)")
    common.add_argument("--preset", help="named model from models.yaml")
    common.add_argument("--N", type=int, help="truncation override for diagonal presets")
    common.add_argument("--kappa", type=float, help="weight exponent override (example2)")
    common.add_argument("--m", type=float, help="mass override (example2)")
    common.add_argument("--halfwidth", type=float, help="truncation radius override (example2)")
    common.add_argument("--n", type=int, help="grid points override (example2)")
    common.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    common.add_argument("--tol", type=float, default=None, help="residual tolerance override")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--method", choices=("gauss-hermite", "monte-carlo"), default="gauss-hermite")
    common.add_argument("--nodes", type=int, default=None, help="Gauss-Hermite nodes per axis")
    common.add_argument("--samples", type=int, default=None, help="Monte Carlo sample count")
    common.add_argument("--expect-symmetric", action="store_true", help="fail (exit 2) unless reversible")

    parser = argparse.ArgumentParser(
        prog="ousym",
        description="Symmetric Ornstein-Uhlenbeck semigroups: checks, reports and presets.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {config.VERSION}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="count", default=0)
    parser.add_argument("--list-presets", action="store_true", help="list registry presets and exit")
    sub = parser.add_subparsers(dest="command")

    for name in ("check", "gramian", "gap", "diagnostics", "report", "example1", "example2"):
        sub.add_parser(name, parents=[common], help=(COMMANDS[name].__doc__ or "").split("\n")[0])
    sub.choices["gramian"].add_argument("--t-grid", type=_floats, default=None, help="comma-separated times")
    sub.choices["report"].add_argument("--p", type=float, default=4.0, help="Meyer exponent")

    mehler = sub.add_parser("mehler", parents=[common], help="R_tφ(x) by quadrature or Monte Carlo")
    mehler.add_argument("--observable", help="observable document (path or inline JSON)")
    mehler.add_argument("--x", type=_floats, default=None, help="evaluation point")
    mehler.add_argument("--t", type=float, default=1.0)

    sobolev = sub.add_parser("sobolev", parents=[common], help="Gauss-Sobolev norms and Meyer ratios")
    sobolev.add_argument("--observable", help="observable document (path or inline JSON)")
    sobolev.add_argument("--p", type=float, default=2.0)

    simulate = sub.add_parser("simulate", parents=[common], help="exact path ensemble")
    simulate.add_argument("--dt", type=float, default=1.0)
    simulate.add_argument("--steps", type=int, default=1)
    simulate.add_argument("--x0", default="stationary", help="'stationary' or comma-separated start point")

    history = sub.add_parser("history", help="recent runs from the ledger")
    history.add_argument("--limit", type=int, default=10)
    history.add_argument("--model-hash", default=None)
    history.add_argument("--prune", type=int, default=None, metavar="DAYS")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose - args.quiet)

    if args.list_presets:
        from tools.registry import presets_summary

        print(presets_summary())
        return EXIT_OK
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_INPUT
    if not hasattr(args, "p"):
        args.p = 4.0

    from tools.weighted_heat import GridTooCoarseError

    try:
        outcome = COMMANDS[args.command](args)
    except (GridTooCoarseError, ArithmeticError) as e:
        # numerical failure on a model that loaded; a failed check, not bad input
        print(f"check failed: {e}", file=sys.stderr)
        logger.debug("Command %s failed", args.command, exc_info=True)
        outcome = Outcome(EXIT_CHECK_FAILED, "fail")
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        logger.debug("Command %s failed", args.command, exc_info=True)
        outcome = Outcome(EXIT_INPUT, "error")

    if args.command != "history":
        m = outcome.model
        record_run(
            command=args.command,
            exit_code=outcome.exit_code,
            model_name=(m.name if m is not None else args.preset or str(getattr(args, "model", "") or "")),
            model_hash=m.digest if m is not None else "",
            seed=getattr(args, "seed", None),
            verdict=outcome.verdict,
            report_path=outcome.report_path,
            stage_timings=outcome.stage_timings,
        )
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
