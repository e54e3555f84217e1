"""OU model instances (A, Q), document loading and the standing hypothesis.

The model is the single source of truth downstream: every module receives an
``OUModel`` and derives its own operators from it. Arrays are copied and
made read-only at construction.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import sympy

import config
from tools.linalg import expm, is_diagonal, spectral_norm

logger = logging.getLogger(__name__)

KINDS = ("dense", "diagonal", "example2")
_K = sympy.Symbol("k", positive=True, integer=True)


class ModelSchemaError(ValueError):
    """Model document does not conform to the schema."""


class NotPSDError(ValueError):
    """Q has a negative eigenvalue beyond tolerance."""


class NonSymmetricQError(ValueError):
    """Q is not symmetric."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class OUModel:
    """dZ = AZ dt + √Q dW on ℝ^d."""

    a: np.ndarray
    q: np.ndarray
    kind: str = "dense"
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(self.a))
        object.__setattr__(self, "q", _frozen(self.q))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return is_diagonal(self.a) and is_diagonal(self.q)

    @property
    def digest(self) -> str:
        """Stable content hash (kind, shape and raw float64 bytes)."""
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(np.asarray(self.a.shape, dtype=np.int64).tobytes())
        h.update(self.a.tobytes())
        h.update(self.q.tobytes())
        return h.hexdigest()

    def semigroup(self, t: float) -> np.ndarray:
        """S(t) = e^{tA}."""
        if self.is_diagonal:
            return np.diag(np.exp(t * np.diagonal(self.a)))
        return expm(t * self.a)

    @property
    def is_hurwitz(self) -> bool:
        """Every eigenvalue of A has negative real part (Q_∞ exists and is unique)."""
        return bool(np.max(scipy.linalg.eigvals(self.a).real) < 0.0)

    @property
    def scale(self) -> float:
        return max(spectral_norm(self.a), 1e-300)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "dim": self.dim,
            "hash": self.digest,
            "params": {k: v for k, v in self.params.items() if isinstance(v, (int, float, str))},
        }


# ── Validation ───────────────────────────────────────────────────────


def _check_q(q: np.ndarray) -> None:
    norm = spectral_norm(q)
    asym = spectral_norm(q - q.T)
    if asym > config.PSD_TOL * max(norm, 1e-300):
        raise NonSymmetricQError(f"Q is not symmetric (‖Q − Qᵀ‖ = {asym:.3e})")
    lam_min = float(np.min(scipy.linalg.eigvalsh(0.5 * (q + q.T)))) if q.size else 0.0
    if lam_min < -config.PSD_TOL * norm:
        raise NotPSDError(f"Q has eigenvalue {lam_min:.3e} below −{config.PSD_TOL:.0e}·‖Q‖")


def _as_matrix(raw, name: str) -> np.ndarray:
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as e:
        raise ModelSchemaError(f"'{name}' is not a numeric matrix: {e}") from e
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ModelSchemaError(f"'{name}' must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelSchemaError(f"'{name}' has non-finite entries")
    return arr


def _sequence(doc: dict, key: str, n: int | None) -> tuple[np.ndarray, str | None]:
    """Read a diagonal sequence given as a list or as a formula in k."""
    formula_key = f"{key}_k"
    if key in doc:
        try:
            return np.array(doc[key], dtype=float).ravel(), doc.get(formula_key)
        except (TypeError, ValueError) as e:
            raise ModelSchemaError(f"'{key}' is not a numeric list: {e}") from e
    if formula_key not in doc:
        raise ModelSchemaError(f"diagonal model needs '{key}' or '{formula_key}'")
    if n is None:
        raise ModelSchemaError(f"'{formula_key}' given without truncation 'N'")
    try:
        expr = sympy.sympify(doc[formula_key], locals={"k": _K})
    except (sympy.SympifyError, TypeError) as e:
        raise ModelSchemaError(f"cannot parse {formula_key}={doc[formula_key]!r}: {e}") from e
    if expr.free_symbols - {_K}:
        raise ModelSchemaError(f"{formula_key} may only depend on k")
    return np.array([float(expr.subs(_K, i)) for i in range(1, n + 1)]), str(doc[formula_key])


def sequence_formula(text: str) -> sympy.Expr:
    """Parse a stored sequence formula into a sympy expression in the positive integer k."""
    return sympy.sympify(text, locals={"k": _K})


def sequence_symbol() -> sympy.Symbol:
    return _K


def _diagonal_from_document(doc: dict, name: str) -> OUModel:
    n = doc.get("N")
    if n is not None:
        n = int(n)
        if n < 1:
            raise ModelSchemaError("truncation N must be ≥ 1")
    elif "alpha" not in doc:
        n = config.DEFAULT_TRUNCATION
    alpha, alpha_f = _sequence(doc, "alpha", n)
    q, q_f = _sequence(doc, "q", n)
    if alpha.size != q.size:
        raise ModelSchemaError(f"alpha has {alpha.size} entries, q has {q.size}")
    if np.any(alpha >= 0):
        raise ModelSchemaError("diagonal model needs α_k < 0 for every k")
    if np.any(q < 0):
        raise NotPSDError("diagonal model has a negative q_k")
    if np.any(q == 0):
        raise ModelSchemaError("diagonal model needs q_k > 0 for every k")
    params = {"N": int(alpha.size)}
    if alpha_f and q_f:
        params.update({"alpha_k": alpha_f, "q_k": q_f})
    return OUModel(a=np.diag(alpha), q=np.diag(q), kind="diagonal", name=name, params=params)


def load_model(doc: dict | str | Path, name: str = "") -> OUModel:
    """Build a validated OUModel from a model document.

    Args:
        doc: parsed document, JSON text, or a path to a JSON file.
        name: optional label carried into reports.

    Raises:
        ModelSchemaError, NonSymmetricQError, NotPSDError.
    """
    if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
        path = Path(doc)
        name = name or path.stem
        doc = path.read_text(encoding="utf-8")
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise ModelSchemaError(f"model document is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ModelSchemaError("model document must be a JSON object")

    kind = doc.get("kind", "dense")
    name = name or str(doc.get("name", ""))
    if kind not in KINDS:
        raise ModelSchemaError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")

    if kind == "dense":
        if "A" not in doc or "Q" not in doc:
            raise ModelSchemaError("dense model needs 'A' and 'Q'")
        a = _as_matrix(doc["A"], "A")
        q = _as_matrix(doc["Q"], "Q")
        if a.shape != q.shape:
            raise ModelSchemaError(f"A is {a.shape}, Q is {q.shape}")
        _check_q(q)
        model = OUModel(a=a, q=0.5 * (q + q.T), kind="dense", name=name)
    elif kind == "diagonal":
        model = _diagonal_from_document(doc, name)
    else:
        from tools.weighted_heat import discretize

        try:
            grid = discretize(
                kappa=float(doc["kappa"]),
                m=float(doc["m"]),
                halfwidth=float(doc["halfwidth"]) if doc.get("halfwidth") is not None else None,
                n=int(doc["n"]),
            )
        except KeyError as e:
            raise ModelSchemaError(f"example2 model missing {e}") from e
        model = OUModel(a=grid.a, q=grid.q, kind="example2", name=name, params=grid.params)

    logger.debug("Loaded %s model %s (d=%d, hash=%s)", model.kind, name or "<anon>", model.dim, model.digest[:12])
    return model


# ── Hypothesis H ─────────────────────────────────────────────────────


@dataclass
class HypothesisVerdict:
    """Standing hypothesis: ∫₀^∞ tr(S(s)QS*(s))ds < ∞ and Q_∞ injective."""

    holds: bool
    trace_integral: float
    qinf_min_eig: float
    hurwitz: bool
    method: str
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "trace_integral": self.trace_integral,
            "qinf_min_eig": self.qinf_min_eig,
            "hurwitz": self.hurwitz,
            "method": self.method,
            "note": self.note,
        }


def van_loan_gramian(a: np.ndarray, q: np.ndarray, t: float) -> np.ndarray:
    """Q_t = ∫₀^t e^{sA} Q e^{sA*} ds via one block exponential."""
    d = a.shape[0]
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = -a
    block[:d, d:] = q
    block[d:, d:] = a.T
    f = expm(t * block)
    out = f[d:, d:].T @ f[:d, d:]
    return 0.5 * (out + out.T)


def _doubling_grid_verdict(m: OUModel) -> HypothesisVerdict:
    """Decide divergence of tr(Q_t) on t = 1, 2, 4, …, 64."""
    traces = []
    last = None
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(7):
            try:
                last = van_loan_gramian(m.a, m.q, float(2 ** j))
            except (OverflowError, ValueError, np.linalg.LinAlgError):
                last = None
            tr = float(np.trace(last)) if last is not None else float("inf")
            traces.append(tr)
            if not np.isfinite(tr):
                break
    if not np.isfinite(traces[-1]):
        return HypothesisVerdict(False, float("inf"), 0.0, False, "doubling-grid", "tr(Q_t) overflows")
    increments = np.diff(traces)
    decaying = len(increments) >= 2 and increments[-1] <= 1e-10 * max(traces[-1], 1.0)
    if not decaying:
        logger.info("tr(Q_t) keeps growing on the doubling grid (last increment %.3e)", increments[-1])
        return HypothesisVerdict(False, float("inf"), 0.0, False, "doubling-grid", "tr(Q_t) diverges")
    min_eig = float(np.min(scipy.linalg.eigvalsh(last)))
    holds = min_eig > config.Q_FLOOR * max(float(np.max(scipy.linalg.eigvalsh(last))), 1e-300)
    return HypothesisVerdict(holds, traces[-1], min_eig, False, "doubling-grid", "integral converges on a non-Hurwitz A")


def validate_hypothesis(m: OUModel) -> HypothesisVerdict:
    """Evaluate the standing hypothesis; never raises on failure.

    Hurwitz A: the trace integral equals tr(Q_∞) from the Lyapunov solve.
    Otherwise tr(Q_t) is followed on a doubling grid.
    """
    if not m.is_hurwitz:
        return _doubling_grid_verdict(m)

    from tools.gramian import NoUniqueSolutionError, solve_lyapunov

    try:
        q_inf = solve_lyapunov(m)
    except NoUniqueSolutionError as e:
        return HypothesisVerdict(False, float("inf"), 0.0, True, "lyapunov", str(e))

    trace_integral = float(np.trace(q_inf))
    w = scipy.linalg.eigvalsh(q_inf)
    min_eig, max_eig = float(w[0]), float(w[-1])
    if m.kind == "example2":
        # weights reach e^{-κL}; injectivity is below double precision on the truncation
        holds = bool(np.isfinite(trace_integral))
        note = "trace finiteness only (weighted truncation)"
    else:
        holds = bool(np.isfinite(trace_integral) and min_eig > config.Q_FLOOR * max(max_eig, 1e-300))
        note = "" if holds else "Q_∞ numerically singular"
    method = "closed-form" if m.is_diagonal else "lyapunov"
    return HypothesisVerdict(holds, trace_integral, min_eig, True, method, note)
