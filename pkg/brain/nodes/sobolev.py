from __future__ import annotations

import logging

import numpy as np

import config
from brain.nodes import make_check
from brain.state import ReportState
from tools.mehler import check_hypercontractivity_lsi, kolmogorov_residual
from tools.polynomial import PolynomialObservable
from tools.spaces import meyer_ratio, pointwise_identities

logger = logging.getLogger(__name__)

# node doubling up to LP_MAX_NODES stays under the tensor-grid limit up to here
_MAX_DIM = 3
_CORPUS_SIZE = 5
_POINTS = 20


def _corpus(dim: int, rng: np.random.Generator) -> list[PolynomialObservable]:
    return [PolynomialObservable.random(dim, int(rng.integers(1, 4)), rng) for _ in range(_CORPUS_SIZE)]


def run_sobolev(state: ReportState) -> dict:
    """Meyer ratios, pointwise identities, hypercontractivity/LSI and the Kolmogorov residual."""
    m, g, b = state["model"], state["gramians"], state["bundle"]
    opts = state["options"]
    if m.dim > min(_MAX_DIM, config.GH_MAX_DIM):
        logger.warning("Sobolev stage skipped: d=%d above quadrature limit %d", m.dim, _MAX_DIM)
        return {"skipped": [*state["skipped"], "sobolev"]}

    rng = np.random.default_rng(opts.get("seed", config.DEFAULT_SEED))
    corpus = _corpus(m.dim, rng)
    checks = list(state["checks"])
    p = float(opts.get("p") or 4.0)

    meyer_2 = meyer_ratio(corpus, m, g, b, 2.0)
    meyer_p = meyer_ratio(corpus, m, g, b, p) if p != 2.0 else meyer_2
    checks.append(make_check("meyer_p2_identity", meyer_2.p2_identity_residual <= 1e-9,
                             meyer_2.p2_identity_residual, 1e-9))

    points = rng.standard_normal((_POINTS, m.dim)) @ b.qinf_half
    pointwise = {k: 0.0 for k in ("first", "second", "mixed", "c2_variant")}
    for phi in corpus:
        for k, v in pointwise_identities(phi, m, b, points).items():
            pointwise[k] = max(pointwise[k], v)
    for k in ("first", "second", "mixed"):
        checks.append(make_check(f"pointwise_{k}", pointwise[k] <= 1e-9, pointwise[k], 1e-9))

    hyper = []
    if m.dim <= 2:
        t = 0.5 / b.gap
        for phi in corpus:
            rep = check_hypercontractivity_lsi(m, g, b, phi, 2.0, t)
            hyper.append(rep.to_dict())
            if rep.converged:
                checks.append(make_check("hypercontractivity", rep.hypercontractivity_margin >= -1e-9,
                                         rep.hypercontractivity_margin, -1e-9))
            checks.append(make_check("lsi", rep.lsi_margin >= -1e-9, rep.lsi_margin, -1e-9))

    kolmogorov = []
    for t in (0.1, 1.0):
        for phi in corpus:
            rep = kolmogorov_residual(m, g, b, phi, t, points)
            kolmogorov.append(rep.to_dict())
            checks.append(make_check("kolmogorov", rep.residual <= 1e-8, rep.residual, 1e-8))
            checks.append(make_check("kolmogorov_forms", rep.form_agreement <= 1e-9, rep.form_agreement, 1e-9))

    out = {
        "meyer_p2": meyer_2.to_dict(),
        "meyer_p": meyer_p.to_dict(),
        "pointwise": pointwise,
        "hypercontractivity": hyper,
        "kolmogorov": kolmogorov,
        "corpus": [phi.to_document() for phi in corpus],
    }
    return {"sobolev": out, "checks": checks}
