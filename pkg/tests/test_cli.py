"""Command-line interface tests (all against the mock backend)."""

import json
import os

import pytest
import yaml
from click.testing import CliRunner

from cloudrca.cli import RunSettings, _settings_from, main


@pytest.fixture
def runner():
    return CliRunner()


class TestRunSettings:
    def test_roundtrip(self):
        settings = RunSettings(mode="tsc", k=5, malformed_pct=10)
        assert RunSettings.from_dict(settings.to_dict()) == settings

    def test_from_dict_ignores_unknown_keys(self):
        settings = RunSettings.from_dict({"mode": "sc", "unrelated": True})
        assert settings.mode == "sc"

    def test_flags_override_config_file(self, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text(yaml.safe_dump({"mode": "sc", "k": 3, "seed": 9}))
        settings = _settings_from(str(config), mode="tsc", aggregate="llm")
        assert settings.mode == "tsc"
        assert settings.k == 3
        assert settings.seed == 9
        assert settings.aggregate == "llm_aggregate"


class TestGenScenarios:
    def test_writes_bundle(self, runner, tmp_path):
        out = tmp_path / "bundle"
        result = runner.invoke(
            main, ["gen-scenarios", "--seed", "5", "--count", "3", "--out-dir", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert "generated 3 scenarios" in result.output
        index = json.loads((out / "index.json").read_text())
        assert len(index["job_ids"]) == 3


class TestDiagnose:
    def test_pass_exits_zero(self, runner, scenario_dir, tmp_path, sandbox):
        job_id = sandbox.job_ids[0]
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            [
                "diagnose",
                job_id,
                "--scenarios",
                scenario_dir,
                "--out-dir",
                str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert f"{job_id}: passed=True" in result.output
        manifest = json.loads((out / job_id / "result.json").read_text())
        assert manifest["passed"] is True
        assert manifest["result"]["responsibility"] in ("User", "Platform")
        assert (out / job_id / "trajectory.jsonl").exists()

    def test_unknown_job_exits_nonzero(self, runner, scenario_dir, tmp_path):
        result = runner.invoke(
            main,
            [
                "diagnose",
                "fj00000000",
                "--scenarios",
                scenario_dir,
                "--out-dir",
                str(tmp_path / "out"),
            ],
        )
        assert result.exit_code == 1

    def test_tsc_mode_records_candidates(self, runner, scenario_dir, tmp_path, sandbox):
        job_id = sandbox.job_ids[1]
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            [
                "diagnose",
                job_id,
                "--scenarios",
                scenario_dir,
                "--out-dir",
                str(out),
                "--mode",
                "tsc",
                "--k",
                "3",
            ],
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / job_id / "result.json").read_text())
        assert manifest["mode"] == "tsc"
        assert len(manifest["candidates"]) == 3


class TestBatch:
    def test_report_and_floor(self, runner, scenario_dir, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            [
                "batch",
                "--scenarios",
                scenario_dir,
                "--out-dir",
                str(out),
                "--pass-floor",
                "95",
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out / "report.json").read_text())
        assert report["pass_rate"] == 100.0
        predictions = (out / "predictions.jsonl").read_text().splitlines()
        assert len(predictions) == len(report["jobs"]) * 4

    def test_floor_failure_exits_nonzero(self, runner, scenario_dir, tmp_path):
        result = runner.invoke(
            main,
            [
                "batch",
                "--scenarios",
                scenario_dir,
                "--out-dir",
                str(tmp_path / "out"),
                "--pass-floor",
                "100.1",
            ],
        )
        assert result.exit_code == 1


class TestReplay:
    def _diagnose(self, runner, scenario_dir, out, job_id):
        result = runner.invoke(
            main,
            ["diagnose", job_id, "--scenarios", scenario_dir, "--out-dir", str(out)],
        )
        assert result.exit_code == 0, result.output
        return os.path.join(str(out), job_id, "trajectory.jsonl")

    def test_match(self, runner, scenario_dir, tmp_path, sandbox):
        path = self._diagnose(runner, scenario_dir, tmp_path / "out", sandbox.job_ids[0])
        result = runner.invoke(main, ["replay", path])
        assert result.exit_code == 0, result.output
        assert "replay matches" in result.output

    def test_divergence_detected(self, runner, scenario_dir, tmp_path, sandbox):
        path = self._diagnose(runner, scenario_dir, tmp_path / "out", sandbox.job_ids[0])
        lines = open(path).read().splitlines()
        record = json.loads(lines[0])
        record["step"]["thought"] = "tampered"
        lines[0] = json.dumps(record, sort_keys=True)
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        result = runner.invoke(main, ["replay", path])
        assert result.exit_code == 1
        assert "divergence at step 0" in result.output
