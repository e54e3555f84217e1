"""Report and artifact writers.

Every file written here carries the run manifest: JSON reports embed it under
"manifest", CSV files start with ``# key=value`` comment lines and Parquet
ensembles store it in the schema metadata.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

import config

logger = logging.getLogger(__name__)

_METADATA_KEY = b"ousym.manifest"


def _timestamp() -> str:
    """UTC ISO timestamp, pinned to SOURCE_DATE_EPOCH when that is set."""
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    if epoch is not None:
        try:
            return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()
        except (ValueError, OverflowError):
            logger.warning("Ignoring malformed SOURCE_DATE_EPOCH=%r", epoch)
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    model_hash: str = ""
    seed: int | None = None
    tool_version: str = config.VERSION
    started_at: str = field(default_factory=_timestamp)
    finished_at: str = ""
    outputs: list[str] = field(default_factory=list)

    def finish(self) -> "RunManifest":
        self.finished_at = _timestamp()
        return self

    def add_output(self, path: Path) -> None:
        self.outputs.append(Path(path).name)

    def to_dict(self) -> dict:
        return asdict(self)


def _jsonable(obj):
    """json.dumps default for numpy scalars/arrays and paths."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _finite(obj):
    """Replace non-finite floats by strings so the output stays strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return "inf" if obj > 0 else "-inf" if obj < 0 else "nan"
    return obj


def dumps(payload: dict) -> str:
    """Deterministic JSON text: sorted keys, numpy-aware."""
    plain = json.loads(json.dumps(payload, default=_jsonable))
    return json.dumps(_finite(plain), sort_keys=True, indent=2, allow_nan=False)


def write_json(path: Path, payload: dict, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest.add_output(path)
    body = {**payload, "manifest": manifest.to_dict()}
    path.write_text(dumps(body) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def _header_lines(header: dict) -> str:
    return "".join(f"# {k}={v}\n" for k, v in header.items())


def write_csv(path: Path, frame: pd.DataFrame, manifest: RunManifest, header: dict | None = None) -> Path:
    """CSV with ``# key=value`` lines (extra header, then manifest) and %.17g floats.

    Read back with ``pd.read_csv(path, comment="#")``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest.add_output(path)
    meta = {**(header or {}), **{k: v for k, v in manifest.to_dict().items() if k not in ("outputs", "finished_at")}}
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_header_lines(meta))
        frame.to_csv(f, index=False, float_format="%.17g")
    logger.debug("Wrote %s (%d rows)", path, len(frame))
    return path


def write_ensemble(path: Path, ensemble, manifest: RunManifest, fmt: str = "parquet") -> Path:
    """Path ensemble as Parquet (header in schema metadata) or CSV (header comment lines).

    Args:
        path: target file; the suffix is replaced to match ``fmt``.
        ensemble: a ``PathEnsemble``.
        fmt: "parquet" or "csv".
    """
    header = ensemble.header()
    frame = ensemble.to_frame()
    if fmt == "csv":
        return write_csv(Path(path).with_suffix(".csv"), frame, manifest, header=header)
    if fmt != "parquet":
        raise ValueError(f"unknown ensemble format {fmt!r}")

    path = Path(path).with_suffix(".parquet")
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest.add_output(path)
    table = pa.Table.from_pandas(frame, preserve_index=False)
    meta = dict(table.schema.metadata or {})
    meta[_METADATA_KEY] = json.dumps({**header, **manifest.to_dict()}, sort_keys=True, default=_jsonable).encode()
    pq.write_table(table.replace_schema_metadata(meta), path)
    logger.debug("Wrote %s (%d rows)", path, len(frame))
    return path


def read_ensemble_header(path: Path) -> dict:
    """Header of an ensemble file written by ``write_ensemble``."""
    path = Path(path)
    if path.suffix == ".parquet":
        meta = pq.read_schema(path).metadata or {}
        return json.loads(meta[_METADATA_KEY])
    header = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition("=")
            header[key] = value
    return header
