from __future__ import annotations

import json
import sys

import numpy as np

from examiner.cli import main
from examiner import rundir as rd
from examiner.rundir import RunDirectory

from conftest import corner_landscape, sut_serve_argv, write_json

RESULT_ARTIFACTS = (rd.PHASE1_LOG, rd.SEEDS_JSON, rd.PHASE2_LOG, rd.FAILURE_MODES_JSON)


def read_bytes(run_dir, name: str) -> bytes:
    return (run_dir / name).read_bytes()


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


class TestSearch:
    def test_deterministic_reruns_and_workers(self, run_config_dir, tmp_path):
        cfg = run_config_dir()
        outs = [tmp_path / f"run{i}" for i in range(3)]
        assert run_cli("search", "--config", cfg, "--out", outs[0], "--workers", 1) == 0
        assert run_cli("search", "--config", cfg, "--out", outs[1], "--workers", 1) == 0
        assert run_cli("search", "--config", cfg, "--out", outs[2], "--workers", 8) == 0
        for name in RESULT_ARTIFACTS:
            blob = read_bytes(outs[0], name)
            assert read_bytes(outs[1], name) == blob, name
            assert read_bytes(outs[2], name) == blob, name

    def test_seed_override_changes_results(self, run_config_dir, tmp_path):
        cfg = run_config_dir()
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("search", "--config", cfg, "--out", a) == 0
        assert run_cli("search", "--config", cfg, "--out", b, "--seed", 999) == 0
        assert read_bytes(a, rd.SEEDS_JSON) != read_bytes(b, rd.SEEDS_JSON)

    def test_status_flags_progress(self, run_config_dir, tmp_path):
        cfg = run_config_dir()
        out = tmp_path / "run"
        assert run_cli("search", "--config", cfg, "--out", out) == 0
        status = RunDirectory(out).status()
        assert status["phase1_done"] and status["phase2_done"] and not status["metrics_done"]

    def test_rerun_on_complete_dir_is_noop(self, run_config_dir, tmp_path):
        cfg = run_config_dir()
        out = tmp_path / "run"
        assert run_cli("search", "--config", cfg, "--out", out) == 0
        before = read_bytes(out, rd.FAILURE_MODES_JSON)
        assert run_cli("search", "--config", cfg, "--out", out) == 0
        assert read_bytes(out, rd.FAILURE_MODES_JSON) == before

    def test_foreign_config_in_dir_refused(self, run_config_dir, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli("search", "--config", run_config_dir(), "--out", out) == 0
        other = run_config_dir(master_seed=123)
        assert run_cli("search", "--config", other, "--out", out) == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "ConfigError" and err["exit_code"] == 2

    def test_resume_after_phase1_matches_uninterrupted(self, run_config_dir, tmp_path, monkeypatch):
        cfg = run_config_dir()
        clean, resumed = tmp_path / "clean", tmp_path / "resumed"
        assert run_cli("search", "--config", cfg, "--out", clean) == 0

        import examiner.cli as cli_mod

        real = cli_mod.seed_to_mode_pipeline
        from examiner.errors import ProtocolError

        def explode(*a, **kw):
            raise ProtocolError("simulated crash after phase 1")

        monkeypatch.setattr(cli_mod, "seed_to_mode_pipeline", explode)
        assert run_cli("search", "--config", cfg, "--out", resumed) == 3
        status = RunDirectory(resumed).status()
        assert status["phase1_done"] and not status["phase2_done"]
        monkeypatch.setattr(cli_mod, "seed_to_mode_pipeline", real)
        assert run_cli("search", "--config", cfg, "--out", resumed) == 0
        for name in RESULT_ARTIFACTS:
            assert read_bytes(resumed, name) == read_bytes(clean, name), name

    def test_missing_out_dir_is_config_error(self, run_config_dir):
        assert run_cli("search", "--config", run_config_dir()) == 2

    def test_missing_tree_file(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "c.json", {
            "master_seed": 1, "tree": "nope.json", "decoder": "nope2.json",
            "sut": {"kind": "landscape", "path": "nope3.json"},
            "phase1": {"policy_bounds": {"dims": 2, "lower": -2, "upper": 2}},
        })
        assert run_cli("search", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_artifacts_embed_fingerprint_and_seed(self, run_config_dir, tmp_path):
        out = tmp_path / "run"
        assert run_cli("search", "--config", run_config_dir(), "--out", out) == 0
        run = RunDirectory(out)
        fingerprint = run.read_json(rd.CONFIG_JSON)["fingerprint"]
        modes = run.read_json(rd.FAILURE_MODES_JSON)
        assert modes["fingerprint"] == fingerprint and modes["master_seed"] == 5
        header, _ = run.read_jsonl(rd.PHASE1_LOG)
        assert header["fingerprint"] == fingerprint and header["master_seed"] == 5


class TestMetricsAndExport:
    def _complete_run(self, run_config_dir, tmp_path):
        out = tmp_path / "run"
        assert run_cli("search", "--config", run_config_dir(), "--out", out) == 0
        return out

    def test_metrics_before_phase2_exits_4(self, tmp_path, capsys):
        assert run_cli("metrics", "--out", tmp_path / "empty") == 4
        err = json.loads(capsys.readouterr().err.strip())
        assert "phase2 incomplete" in err["message"] and err["exit_code"] == 4

    def test_metrics_writes_report_and_samples(self, run_config_dir, tmp_path):
        out = self._complete_run(run_config_dir, tmp_path)
        assert run_cli("metrics", "--out", out, "--samples", 60) == 0
        run = RunDirectory(out)
        report = run.read_json(rd.REPORT_JSON)
        assert 0.0 <= report["success_rate"] <= 1.0
        _, samples = run.read_jsonl(rd.METRICS_SAMPLES)
        assert len(samples) == 60 * len(report["per_mode"])
        assert run.status()["metrics_done"]

    def test_report_reproducible_from_persisted_samples(self, run_config_dir, tmp_path):
        out = self._complete_run(run_config_dir, tmp_path)
        assert run_cli("metrics", "--out", out, "--samples", 50) == 0
        run = RunDirectory(out)
        report = run.read_json(rd.REPORT_JSON)
        _, samples = run.read_jsonl(rd.METRICS_SAMPLES)
        threshold = report["threshold"]
        for entry in report["per_mode"]:
            errs = [s["err3d"] for s in samples if s["mode"] == entry["agent_id"]]
            assert len(errs) == entry["samples_used"]
            assert np.mean(np.array(errs) < threshold) == entry["pnae"]
            assert min(errs) == entry["min_mpjpe"]

    def test_metrics_deterministic(self, run_config_dir, tmp_path):
        out = self._complete_run(run_config_dir, tmp_path)
        assert run_cli("metrics", "--out", out, "--samples", 40) == 0
        first = read_bytes(out, rd.REPORT_JSON)
        assert run_cli("metrics", "--out", out, "--samples", 40) == 0
        assert read_bytes(out, rd.REPORT_JSON) == first

    def test_export_csv(self, run_config_dir, tmp_path):
        out = self._complete_run(run_config_dir, tmp_path)
        assert run_cli("export-csv", "--out", out) == 4  # metrics not yet done
        assert run_cli("metrics", "--out", out) == 0
        assert run_cli("export-csv", "--out", out) == 0
        report_csv = (out / rd.REPORT_CSV).read_text().splitlines()
        assert report_csv[0].startswith("fingerprint,master_seed,scope")
        assert len(report_csv) >= 2
        trace = (out / rd.PHASE1_TRACE_CSV).read_text().splitlines()
        header, _ = RunDirectory(out).read_jsonl(rd.PHASE1_LOG)
        assert trace[0].split(",")[2:] == ["agent", "iter", "mean_err2d", "mean_err3d",
                                           "mean_reward", "baseline"]

    def test_sample_command(self, run_config_dir, tmp_path):
        out = self._complete_run(run_config_dir, tmp_path)
        dest = tmp_path / "adv.jsonl"
        assert run_cli("sample", "--out", out, "--count", 25, "--dest", dest) == 0
        lines = [json.loads(l) for l in dest.read_text().splitlines()]
        assert lines[0]["type"] == "header"
        records = lines[1:]
        modes = RunDirectory(out).read_json(rd.FAILURE_MODES_JSON)["modes"]
        assert len(records) == 25 * len(modes)
        assert all(set(r) == {"pose", "nuisance_overrides", "mode_id", "err_3d"} for r in records)


class TestProtocolTransparencyRuns:
    def test_external_run_matches_in_process_bitwise(self, run_config_dir, tmp_path):
        cfg_local = run_config_dir()
        local_out = tmp_path / "local"
        assert run_cli("search", "--config", cfg_local, "--out", local_out) == 0
        assert run_cli("metrics", "--out", local_out, "--samples", 30) == 0

        landscape_path = str(tmp_path / "landscape.json")
        cfg_external = write_json(
            tmp_path / "config_ext.json",
            {**json.loads(open(cfg_local).read()),
             "sut": {"kind": "external", "argv": sut_serve_argv(landscape_path),
                     "timeout": 60.0}},
        )
        ext_out = tmp_path / "ext"
        assert run_cli("search", "--config", cfg_external, "--out", ext_out) == 0
        assert run_cli("metrics", "--out", ext_out, "--samples", 30) == 0
        for name in (*RESULT_ARTIFACTS, rd.REPORT_JSON, rd.METRICS_SAMPLES):
            assert read_bytes(ext_out, name) == read_bytes(local_out, name), name

    def test_dead_sut_exits_3(self, run_config_dir, tmp_path, capsys):
        cfg = write_json(
            tmp_path / "config_dead.json",
            {**json.loads(open(run_config_dir()).read()),
             "sut": {"kind": "external", "argv": [sys.executable, "-c", "pass"]}},
        )
        assert run_cli("search", "--config", cfg, "--out", tmp_path / "dead") == 3
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "ProtocolError"


class TestCurriculumCommand:
    def test_curriculum_artifacts(self, run_config_dir, tmp_path):
        base_cfg = run_config_dir(
            landscape=corner_landscape(trainable=True).to_json_dict(),
            phase1={"num_agents": 3, "max_iterations": 50},
        )
        cur_cfg = write_json(tmp_path / "cur.json", {
            "base": "config.json",
            "loops": 1,
            "presets": ["standard"],
            "per_mode_samples": 30,
            "mix_fraction": 1.0,
            "batch_size": 60,
        })
        out = tmp_path / "cur_run"
        assert run_cli("curriculum", "--config", cur_cfg, "--out", out) == 0
        run = RunDirectory(out)
        report = run.read_json(rd.CURRICULUM_REPORT)
        assert len(report["loops"]) == 1
        assert report["loops"][0]["trained"] is True
        _, rows = run.read_jsonl(rd.ADVERSARY_SET)
        assert len(rows) == 30 * report["loops"][0]["modes_found"]

    def test_curriculum_bad_config(self, tmp_path):
        cfg = write_json(tmp_path / "cur.json", {"loops": 1})
        assert run_cli("curriculum", "--config", cfg, "--out", tmp_path / "o") == 2


class TestSutServe:
    def test_bad_landscape_exits_2(self, tmp_path):
        missing = tmp_path / "missing.json"
        assert run_cli("sut-serve", "--landscape", missing) == 2
