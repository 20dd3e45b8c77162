from __future__ import annotations

import json

import pytest

from examiner import ConfigError, KinematicTree
from examiner.config import load_run_config, phase1_from_dict, phase2_from_dict

from conftest import corner_landscape, write_json


def write_inputs(tmp_path):
    tree = KinematicTree.chain([2], -2.0, 2.0)
    write_json(tmp_path / "tree.json", tree.to_json_dict())
    write_json(tmp_path / "decoder.json", {"kind": "identity", "dims": 2})
    write_json(tmp_path / "landscape.json", corner_landscape().to_json_dict())


def base_config(**overrides) -> dict:
    cfg = {
        "master_seed": 5,
        "tree": "tree.json",
        "decoder": "decoder.json",
        "sut": {"kind": "landscape", "path": "landscape.json"},
        "phase1": {"policy_bounds": {"dims": 2, "lower": -2.0, "upper": 2.0}},
    }
    cfg.update(overrides)
    return cfg


class TestLoading:
    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        write_inputs(tmp_path)
        nested = tmp_path / "nested"
        nested.mkdir()
        cfg = base_config(tree="../tree.json", decoder="../decoder.json",
                          sut={"kind": "landscape", "path": "../landscape.json"})
        path = write_json(nested / "config.json", cfg)
        loaded = load_run_config(path)
        assert loaded.tree_path.endswith("tree.json")

    def test_seed_override(self, tmp_path):
        write_inputs(tmp_path)
        path = write_json(tmp_path / "config.json", base_config())
        assert load_run_config(path).master_seed == 5
        assert load_run_config(path, seed_override=42).master_seed == 42

    def test_missing_referenced_file(self, tmp_path):
        write_inputs(tmp_path)
        path = write_json(tmp_path / "config.json", base_config(tree="gone.json"))
        with pytest.raises(ConfigError, match="does not exist"):
            load_run_config(path)

    def test_phase2_threshold_defaults_to_phase1(self, tmp_path):
        write_inputs(tmp_path)
        cfg = base_config()
        cfg["phase1"]["adversarial_threshold"] = 70.0
        path = write_json(tmp_path / "config.json", cfg)
        assert load_run_config(path).phase2.adversarial_threshold == 70.0

    def test_nuisance_must_be_json_object(self, tmp_path):
        write_inputs(tmp_path)
        path = write_json(tmp_path / "config.json", base_config(nuisance=[1, 2]))
        with pytest.raises(ConfigError, match="nuisance"):
            load_run_config(path)

    def test_external_sut_needs_argv(self, tmp_path):
        write_inputs(tmp_path)
        path = write_json(tmp_path / "config.json",
                          base_config(sut={"kind": "external", "argv": []}))
        with pytest.raises(ConfigError, match="argv"):
            load_run_config(path)


class TestPhaseDicts:
    def test_unknown_phase1_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown phase1 keys"):
            phase1_from_dict({
                "policy_bounds": {"dims": 2, "lower": -1.0, "upper": 1.0},
                "learning_rte": 0.2,
            })

    def test_unknown_phase2_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown phase2 keys"):
            phase2_from_dict({"delta_mini": 0.01}, 90.0)

    def test_scalar_bounds_need_dims(self):
        with pytest.raises(ConfigError, match="dims"):
            phase1_from_dict({"policy_bounds": {"lower": -1.0, "upper": 1.0}})

    def test_vector_bounds(self):
        cfg = phase1_from_dict({"policy_bounds": {"lower": [-1.0, -2.0], "upper": [1.0, 0.0]}})
        assert cfg.policy_bounds.lower.tolist() == [-1.0, -2.0]


class TestFingerprint:
    def _load(self, tmp_path, **overrides):
        write_inputs(tmp_path)
        path = write_json(tmp_path / "config.json", base_config(**overrides))
        return load_run_config(path)

    def test_stable_across_loads(self, tmp_path):
        assert self._load(tmp_path).fingerprint() == self._load(tmp_path).fingerprint()

    def test_excludes_sut_transport(self, tmp_path):
        write_inputs(tmp_path)
        local = write_json(tmp_path / "a.json", base_config())
        external = write_json(tmp_path / "b.json", base_config(
            sut={"kind": "external", "argv": ["some-sut", "--flag"]}))
        assert load_run_config(local).fingerprint() == load_run_config(external).fingerprint()

    def test_excludes_out_dir(self, tmp_path):
        write_inputs(tmp_path)
        a = write_json(tmp_path / "a.json", base_config(out_dir="runs/a"))
        b = write_json(tmp_path / "b.json", base_config(out_dir="runs/b"))
        assert load_run_config(a).fingerprint() == load_run_config(b).fingerprint()

    def test_tracks_referenced_file_content_not_path(self, tmp_path):
        write_inputs(tmp_path)
        original = json.loads((tmp_path / "tree.json").read_text())
        write_json(tmp_path / "tree_copy.json", original)
        a = write_json(tmp_path / "a.json", base_config())
        b = write_json(tmp_path / "b.json", base_config(tree="tree_copy.json"))
        assert load_run_config(a).fingerprint() == load_run_config(b).fingerprint()
        original["limits_high"][0] = 1.5
        write_json(tmp_path / "tree_copy.json", original)
        assert load_run_config(a).fingerprint() != load_run_config(b).fingerprint()

    def test_tracks_seed_and_hyperparameters(self, tmp_path):
        base = self._load(tmp_path)
        changed_seed = self._load(tmp_path, master_seed=6)
        assert base.fingerprint() != changed_seed.fingerprint()
        cfg = base_config()
        cfg["phase1"]["diversity_weight"] = 0.3
        write_inputs(tmp_path)
        path = write_json(tmp_path / "config.json", cfg)
        assert load_run_config(path).fingerprint() != base.fingerprint()


class TestAtomicWrites:
    def test_no_temp_files_left_behind(self, tmp_path):
        from examiner.rundir import RunDirectory

        run = RunDirectory(tmp_path / "run")
        run.write_json("x.json", {"a": 1})
        run.write_jsonl("y.jsonl", {"h": 1}, [{"r": 2}])
        run.write_csv("z.csv", ["a"], [[1.5]])
        leftovers = [p.name for p in (tmp_path / "run").iterdir() if p.name.endswith(".tmp")]
        assert leftovers == []
