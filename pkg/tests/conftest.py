from __future__ import annotations

import json
import sys

import numpy as np
import pytest

from examiner import KinematicTree
from examiner.landscape import Bump, SyntheticLandscape


@pytest.fixture
def plane_tree() -> KinematicTree:
    """One 2-dim joint with generous limits; the workhorse for latent-plane runs."""
    return KinematicTree.chain([2], -2.0, 2.0)


@pytest.fixture
def triplet_tree() -> KinematicTree:
    return KinematicTree.chain([3], -2.0, 2.0)


def corner_landscape(err2d_ratio: float = 1.0, trainable: bool = False) -> SyntheticLandscape:
    """Four identical bumps at the box corners of [-2, 2]^2."""
    centers = [(1.6, 1.6), (1.6, -1.6), (-1.6, 1.6), (-1.6, -1.6)]
    return SyntheticLandscape(
        baseline=20.0,
        bumps=[Bump(np.array(c), 280.0, 0.3) for c in centers],
        err2d_ratio=err2d_ratio,
        trainable=trainable,
    )


def write_json(path, obj) -> str:
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


@pytest.fixture
def run_config_dir(tmp_path):
    """A ready-to-search config directory: tree, decoder, landscape, config."""

    def build(
        landscape: dict | None = None,
        phase1: dict | None = None,
        phase2: dict | None = None,
        sut: dict | None = None,
        master_seed: int = 5,
        metrics_count: int = 100,
    ) -> str:
        tree = KinematicTree.chain([2], -2.0, 2.0)
        write_json(tmp_path / "tree.json", tree.to_json_dict())
        write_json(tmp_path / "decoder.json", {"kind": "identity", "dims": 2})
        write_json(tmp_path / "landscape.json", landscape or corner_landscape().to_json_dict())
        cfg = {
            "master_seed": master_seed,
            "tree": "tree.json",
            "decoder": "decoder.json",
            "sut": sut or {"kind": "landscape", "path": "landscape.json"},
            "phase1": {
                "policy_bounds": {"dims": 2, "lower": -2.0, "upper": 2.0},
                "num_agents": 4,
                "max_iterations": 60,
                **(phase1 or {}),
            },
            "phase2": {"max_iterations": 80, **(phase2 or {})},
            "metrics_count": metrics_count,
        }
        return write_json(tmp_path / "config.json", cfg)

    return build


def sut_serve_argv(landscape_path: str) -> list[str]:
    return [sys.executable, "-m", "examiner", "sut-serve", "--landscape", landscape_path]
