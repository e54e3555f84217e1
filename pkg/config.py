import os
from pathlib import Path
from dotenv import load_dotenv

VERSION = "1.2.0"

load_dotenv(Path(__file__).resolve().parent / ".env")


def _safe_int(key: str, default: int) -> int:
    """Parse int env var with fallback on malformed values."""
    raw = os.getenv(key, str(default))
    try:
        return int(raw)
    except (ValueError, TypeError):
        return default


def _safe_float(key: str, default: float) -> float:
    """Parse float env var with fallback on malformed values."""
    raw = os.getenv(key, str(default))
    try:
        return float(raw)
    except (ValueError, TypeError):
        return default

# Paths
BASE_DIR = Path(__file__).parent
OUTPUTS_DIR = Path(os.getenv("OUSYM_OUTPUTS_DIR", str(BASE_DIR / "outputs")))
DB_PATH = Path(os.getenv("OUSYM_DB_PATH", str(BASE_DIR / "storage" / "ousym.db")))
LOG_PATH = BASE_DIR / "ousym.log"
MODELS_REGISTRY = BASE_DIR / "models.yaml"

# Ensure directories exist
for d in [OUTPUTS_DIR, DB_PATH.parent]:
    d.mkdir(parents=True, exist_ok=True)

# Model loading
DEFAULT_TRUNCATION = _safe_int("OUSYM_TRUNCATION", 32)
PSD_TOL = _safe_float("OUSYM_PSD_TOL", 1e-12)          # relative to ‖Q‖
Q_FLOOR = _safe_float("OUSYM_Q_FLOOR", 1e-13)          # relative to λ_max(Q)

# Residual tolerances (all relative to the natural scale of the check)
SYMMETRY_TOL = _safe_float("OUSYM_SYMMETRY_TOL", 1e-10)
LYAPUNOV_TOL = _safe_float("OUSYM_LYAPUNOV_TOL", 1e-10)
BUNDLE_TOL = _safe_float("OUSYM_BUNDLE_TOL", 1e-9)

# Chaos expansion
DEGREE_CAP = _safe_int("OUSYM_DEGREE_CAP", 6)

# Quadrature
GH_NODES = _safe_int("OUSYM_GH_NODES", 40)             # per axis
GH_MAX_DIM = _safe_int("OUSYM_GH_MAX_DIM", 4)
LP_REFINE_TOL = _safe_float("OUSYM_LP_REFINE_TOL", 1e-8)
LP_MAX_NODES = _safe_int("OUSYM_LP_MAX_NODES", 160)
QUAD_ABS_TOL = _safe_float("OUSYM_QUAD_ABS_TOL", 1e-11)
RAM_THRESHOLD_PERCENT = _safe_int("OUSYM_RAM_THRESHOLD", 90)

# Gradient bound check
FD_STEP_FACTOR = _safe_float("OUSYM_FD_STEP_FACTOR", 1e-4)
GRADIENT_SLACK = _safe_float("OUSYM_GRADIENT_SLACK", 0.05)

# Monte Carlo
DEFAULT_SEED = _safe_int("OUSYM_SEED", 20240501)
MC_BLOCK_SIZE = _safe_int("OUSYM_MC_BLOCK_SIZE", 65536)
MC_Z_THRESHOLD = _safe_float("OUSYM_MC_Z_THRESHOLD", 4.0)
MAX_WORKERS = _safe_int("OUSYM_MAX_WORKERS", 4)

# Weighted heat equation preset
EXAMPLE2_RADIUS_FACTOR = _safe_float("OUSYM_EXAMPLE2_RADIUS_FACTOR", 40.0)  # L = factor / κ
EXAMPLE2_HARMONIC_TOL = _safe_float("OUSYM_EXAMPLE2_HARMONIC_TOL", 5e-2)
EXAMPLE2_NORM_GAP = _safe_float("OUSYM_EXAMPLE2_NORM_GAP", 0.02)
