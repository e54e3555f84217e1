from __future__ import annotations

import json
import logging
import sqlite3
import threading
from datetime import datetime, timedelta, timezone
from pathlib import Path

import config

logger = logging.getLogger(__name__)

_CREATE_RUNS = """
CREATE TABLE IF NOT EXISTS runs (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    command TEXT NOT NULL,
    model_name TEXT DEFAULT '',
    model_hash TEXT DEFAULT '',
    seed INTEGER,
    verdict TEXT DEFAULT '',
    exit_code INTEGER NOT NULL,
    report_path TEXT DEFAULT '',
    stage_timings TEXT DEFAULT '[]',
    tool_version TEXT DEFAULT '',
    created_at TEXT NOT NULL
)
"""

# The CLI is single-process, but report nodes may record from worker threads.
_db_lock = threading.Lock()


def _connect(db_path: Path | None = None) -> sqlite3.Connection:
    conn = sqlite3.connect(str(db_path or config.DB_PATH), timeout=20.0)
    conn.execute("PRAGMA journal_mode=WAL")
    return conn


def init_db(db_path: Path | None = None) -> None:
    """Create the runs table if it doesn't exist (WAL mode)."""
    with _db_lock:
        conn = _connect(db_path)
        try:
            conn.execute(_CREATE_RUNS)
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_time ON runs(created_at)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_hash ON runs(model_hash)")
            conn.commit()
        finally:
            conn.close()
    logger.debug("Runs ledger initialized at %s", db_path or config.DB_PATH)


def record_run(
    command: str,
    exit_code: int,
    model_name: str = "",
    model_hash: str = "",
    seed: int | None = None,
    verdict: str = "",
    report_path: str = "",
    stage_timings: list | None = None,
    db_path: Path | None = None,
) -> int | None:
    """Append one CLI run to the ledger.

    Failures are logged and swallowed; the ledger never changes a run's outcome.

    Returns:
        The new row id, or None if the write failed.
    """
    try:
        init_db(db_path)
        with _db_lock:
            conn = _connect(db_path)
            try:
                cursor = conn.execute(
                    "INSERT INTO runs (command, model_name, model_hash, seed, verdict, exit_code, "
                    "report_path, stage_timings, tool_version, created_at) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        command, model_name, model_hash, seed, verdict, int(exit_code),
                        report_path, json.dumps(stage_timings or [], default=str), config.VERSION,
                        datetime.now(timezone.utc).isoformat(),
                    ),
                )
                conn.commit()
                return int(cursor.lastrowid)
            finally:
                conn.close()
    except (sqlite3.Error, OSError) as e:
        logger.warning("Failed to record run %s: %s", command, e)
        return None


def list_runs(limit: int = 10, model_hash: str | None = None, db_path: Path | None = None) -> list[dict]:
    """Most recent runs first, optionally filtered by model hash prefix."""
    init_db(db_path)
    with _db_lock:
        conn = _connect(db_path)
        conn.row_factory = sqlite3.Row
        try:
            if model_hash:
                cursor = conn.execute(
                    "SELECT * FROM runs WHERE model_hash LIKE ? ORDER BY id DESC LIMIT ?",
                    (model_hash + "%", limit),
                )
            else:
                cursor = conn.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,))
            rows = [dict(r) for r in cursor.fetchall()]
        finally:
            conn.close()
    for row in rows:
        try:
            row["stage_timings"] = json.loads(row["stage_timings"] or "[]")
        except json.JSONDecodeError:
            row["stage_timings"] = []
    return rows


def prune_runs(days: int = 90, db_path: Path | None = None) -> int:
    """Delete ledger rows older than ``days``."""
    cutoff = (datetime.now(timezone.utc) - timedelta(days=days)).isoformat()
    init_db(db_path)
    with _db_lock:
        conn = _connect(db_path)
        try:
            cursor = conn.execute("DELETE FROM runs WHERE created_at < ?", (cutoff,))
            conn.commit()
            deleted = cursor.rowcount
        finally:
            conn.close()
    if deleted:
        logger.info("Runs ledger cleanup: pruned %d rows older than %dd", deleted, days)
    return deleted
