"""Tests for main.py — subcommands, exit codes and the runs ledger."""
from __future__ import annotations

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from unittest.mock import patch

import pytest

import config
import main
from storage.db import list_runs


# ── Test fixtures ────────────────────────────────────────────────────

@pytest.fixture
def cli_env(tmp_path):
    out = tmp_path / "out"
    db = tmp_path / "runs.db"
    with patch.object(config, "OUTPUTS_DIR", out), \
         patch.object(config, "DB_PATH", db), \
         patch.object(main, "_configure_logging"):
        yield out, db


def _model_file(tmp_path, a, q):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"kind": "dense", "A": a, "Q": q}))
    return str(path)


def _stdout_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class TestEntryPoint:
    def test_list_presets(self, cli_env, capsys):
        assert main.main(["--list-presets"]) == main.EXIT_OK
        out = capsys.readouterr().out
        assert "example1" in out
        assert "symmetric-2x2" in out

    def test_no_command(self, cli_env):
        assert main.main([]) == main.EXIT_INPUT

    def test_missing_model(self, cli_env, capsys):
        assert main.main(["check"]) == main.EXIT_INPUT
        assert "error:" in capsys.readouterr().err

    def test_missing_file(self, cli_env, tmp_path):
        assert main.main(["check", str(tmp_path / "nope.json")]) == main.EXIT_INPUT

    def test_malformed_json(self, cli_env, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"kind\": \"dense\", \"A\": [[-1.0]")
        assert main.main(["check", str(path)]) == main.EXIT_INPUT

    def test_unknown_preset(self, cli_env):
        assert main.main(["check", "--preset", "nope"]) == main.EXIT_INPUT

    def test_asymmetric_q_rejected(self, cli_env, tmp_path):
        path = _model_file(tmp_path, [[-1.0, 0.0], [0.0, -1.0]], [[1.0, 0.3], [0.0, 1.0]])
        assert main.main(["check", path]) == main.EXIT_INPUT


class TestCheck:
    def test_symmetric_pair(self, cli_env, capsys):
        assert main.main(["check", "--preset", "symmetric-2x2"]) == main.EXIT_OK
        payload = _stdout_json(capsys)
        assert payload["symmetry"]["is_symmetric"] is True
        assert payload["classify_2x2"] is True

    def test_control_expected_symmetric(self, cli_env, capsys):
        code = main.main(["check", "--preset", "nonsymmetric-control", "--expect-symmetric"])
        assert code == main.EXIT_CHECK_FAILED
        assert _stdout_json(capsys)["passed"] is False

    def test_unstable_model_fails_hypothesis(self, cli_env, tmp_path, capsys):
        path = _model_file(tmp_path, [[0.5, 0.0], [0.0, -1.0]], [[1.0, 0.0], [0.0, 1.0]])
        assert main.main(["check", path]) == main.EXIT_CHECK_FAILED
        assert _stdout_json(capsys)["hypothesis"]["holds"] is False


class TestCommands:
    def test_gramian_writes_eigenvalues(self, cli_env):
        out, _ = cli_env
        assert main.main(["gramian", "--preset", "symmetric-2x2", "--t-grid", "0.5,1,2"]) == main.EXIT_OK
        assert list(out.glob("gramian_eigenvalues_*.csv"))
        assert list(out.glob("gramian_*.json"))

    def test_gap(self, cli_env, capsys):
        assert main.main(["gap", "--preset", "example1", "--N", "8"]) == main.EXIT_OK
        assert _stdout_json(capsys)["spectral_gap"] == pytest.approx(1.0 / 8)

    def test_gap_refuses_control(self, cli_env):
        assert main.main(["gap", "--preset", "nonsymmetric-control"]) == main.EXIT_INPUT

    def test_mehler_quadrature(self, cli_env, capsys):
        obs = json.dumps({"degree": 2, "terms": [{"c": 1.0, "p": [2, 0]}, {"c": -0.5, "p": [0, 1]}]})
        code = main.main(["mehler", "--preset", "symmetric-2x2", "--observable", obs, "--x", "0.5,-1", "--t", "0.7"])
        assert code == main.EXIT_OK
        payload = _stdout_json(capsys)
        assert payload["difference"] <= 1e-8

    def test_sobolev_p2(self, cli_env, capsys):
        assert main.main(["sobolev", "--preset", "symmetric-2x2", "--p", "2"]) == main.EXIT_OK
        assert _stdout_json(capsys)["p2_identity_residual"] <= 1e-9

    def test_simulate_csv(self, cli_env, capsys):
        out, _ = cli_env
        code = main.main(["simulate", "--preset", "symmetric-2x2", "--samples", "20000", "--dt", "0.5",
                          "--format", "csv", "--expect-symmetric"])
        assert code == main.EXIT_OK
        assert list(out.glob("ensemble_*.csv"))
        assert _stdout_json(capsys)["rejected"] is False

    def test_diagnostics(self, cli_env):
        assert main.main(["diagnostics", "--preset", "fractional-selfadjoint", "--N", "6"]) == main.EXIT_OK

    def test_example1(self, cli_env, capsys):
        assert main.main(["example1", "--N", "16"]) == main.EXIT_OK
        assert all(_stdout_json(capsys)["checks"].values())

    def test_example2(self, cli_env, capsys):
        code = main.main(["example2", "--kappa", "2", "--m", "0.25", "--n", "64", "--samples", "5000", "--seed", "11"])
        assert code == main.EXIT_OK
        assert _stdout_json(capsys)["passed"] is True

    def test_report_control(self, cli_env):
        out, _ = cli_env
        assert main.main(["report", "--preset", "nonsymmetric-control"]) == main.EXIT_OK
        assert list(out.glob("report_*/report.json"))

    def test_report_timings_go_to_ledger(self, cli_env):
        out, db = cli_env
        assert main.main(["report", "--preset", "nonsymmetric-control"]) == main.EXIT_OK
        report = json.loads(next(out.glob("report_*/report.json")).read_text())
        assert "stage_timings" not in report
        names = [t["name"] for t in list_runs(db_path=db)[0]["stage_timings"]]
        assert names[0] == "hypothesis"
        assert "audit" in names


class TestWithoutInvariantMeasure:
    def test_mehler_skips_spectral_comparison(self, cli_env, tmp_path, capsys):
        path = _model_file(tmp_path, [[0.0]], [[1.0]])
        obs = json.dumps({"terms": [{"c": 1.0, "p": [2]}]})
        assert main.main(["mehler", path, "--observable", obs, "--x", "0.5", "--t", "0.7"]) == main.EXIT_OK
        payload = _stdout_json(capsys)
        assert payload["estimate"]["value"] == pytest.approx(0.95, rel=1e-12)
        assert payload["skipped"] == ["spectral_value"]

    def test_simulate_from_point(self, cli_env, tmp_path, capsys):
        path = _model_file(tmp_path, [[0.0]], [[1.0]])
        code = main.main(["simulate", path, "--x0", "0", "--samples", "1000", "--format", "csv"])
        assert code == main.EXIT_OK
        assert _stdout_json(capsys)["ensemble"]["x0_law"] == "point"

    def test_simulate_stationary_is_a_failed_check(self, cli_env, tmp_path, capsys):
        path = _model_file(tmp_path, [[0.0]], [[1.0]])
        assert main.main(["simulate", path, "--samples", "1000"]) == main.EXIT_CHECK_FAILED
        assert _stdout_json(capsys)["skipped"] == ["ensemble"]

    def test_numerical_failure_is_not_input_error(self, cli_env, tmp_path):
        path = _model_file(tmp_path, [[1.0, 0.0], [0.0, -1.0]], [[1.0, 0.0], [0.0, 1.0]])
        assert main.main(["gramian", path]) == main.EXIT_CHECK_FAILED


class TestHistory:
    def test_runs_recorded(self, cli_env, capsys):
        _, db = cli_env
        main.main(["check", "--preset", "symmetric-2x2"])
        main.main(["check", "--preset", "nope"])
        rows = list_runs(db_path=db)
        assert [r["exit_code"] for r in rows] == [main.EXIT_INPUT, main.EXIT_OK]
        assert rows[1]["model_name"] == "symmetric-2x2"
        capsys.readouterr()

        assert main.main(["history", "--limit", "1"]) == main.EXIT_OK
        out = capsys.readouterr().out
        assert "check" in out
        assert len(list_runs(db_path=db)) == 2

    def test_empty_history(self, cli_env, capsys):
        assert main.main(["history"]) == main.EXIT_OK
        assert "No runs recorded." in capsys.readouterr().out
