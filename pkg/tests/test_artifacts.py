"""Tests for storage/artifacts.py — manifests, JSON reports and ensemble files."""
from __future__ import annotations

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import numpy as np
import pandas as pd
import pytest

import config
from storage.artifacts import (
    RunManifest,
    dumps,
    read_ensemble_header,
    write_csv,
    write_ensemble,
    write_json,
)
from tools.gramian import build_gramians
from tools.model import OUModel
from tools.simulate import simulate_paths


# ── Test fixtures ────────────────────────────────────────────────────

_PAIR = OUModel(a=np.array([[-1.0, 0.5], [0.25, -2.0]]), q=np.diag([1.0, 0.5]))


@pytest.fixture
def ensemble():
    g = build_gramians(_PAIR, [0.5])
    return simulate_paths(_PAIR, g, "stationary", 0.5, 3, 20, seed=5)


class TestManifest:
    def test_source_date_epoch_pins_timestamps(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        m = RunManifest("check").finish()
        assert m.started_at == "1970-01-01T00:00:00+00:00"
        assert m.finished_at == m.started_at
        assert m.tool_version == config.VERSION

    def test_malformed_epoch_ignored(self, monkeypatch, caplog):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "yesterday")
        with caplog.at_level("WARNING"):
            m = RunManifest("check")
        assert m.started_at.endswith("+00:00")
        assert "SOURCE_DATE_EPOCH" in caplog.text


class TestJson:
    def test_numpy_and_non_finite(self):
        text = dumps({"b": np.float64(1.5), "a": np.array([1, 2]), "c": float("inf"), "d": np.bool_(True)})
        data = json.loads(text)
        assert data == {"a": [1, 2], "b": 1.5, "c": "inf", "d": True}
        assert text.index('"a"') < text.index('"b"')

    def test_manifest_embedded(self, tmp_path):
        manifest = RunManifest("gap", model_hash="abc", seed=3)
        path = write_json(tmp_path / "out" / "gap.json", {"gap": 0.5}, manifest)
        data = json.loads(path.read_text())
        assert data["gap"] == 0.5
        assert data["manifest"]["seed"] == 3
        assert data["manifest"]["outputs"] == ["gap.json"]


class TestCsv:
    def test_header_and_precision(self, tmp_path):
        frame = pd.DataFrame({"t": [0.1], "lambda_1": [1.0 / 3.0]})
        path = write_csv(tmp_path / "eig.csv", frame, RunManifest("gramian", seed=1), header={"model": "pair"})
        lines = path.read_text().splitlines()
        assert lines[0] == "# model=pair"
        assert "# command=gramian" in lines
        back = pd.read_csv(path, comment="#")
        assert back["lambda_1"][0] == 1.0 / 3.0


class TestEnsemble:
    @pytest.mark.parametrize("fmt", ["parquet", "csv"])
    def test_header_survives(self, tmp_path, ensemble, fmt):
        path = write_ensemble(tmp_path / "paths", ensemble, RunManifest("simulate", seed=5), fmt=fmt)
        assert path.suffix == f".{fmt}"
        header = read_ensemble_header(path)
        assert str(header["seed"]) == "5"
        assert header["x0_law"] == "stationary"
        assert header["command"] == "simulate"

    def test_parquet_rows(self, tmp_path, ensemble):
        path = write_ensemble(tmp_path / "paths", ensemble, RunManifest("simulate"))
        frame = pd.read_parquet(path)
        assert len(frame) == 20 * 4

    def test_unknown_format(self, tmp_path, ensemble):
        with pytest.raises(ValueError):
            write_ensemble(tmp_path / "paths", ensemble, RunManifest("simulate"), fmt="hdf5")
