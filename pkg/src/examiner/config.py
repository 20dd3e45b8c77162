"""Run configuration: loading, validation, canonicalization, fingerprinting.

The fingerprint identifies the *examiner-side* experiment: master seed, tree
and decoder content, nuisance settings, and both phase configurations. The
SUT transport (in-process landscape vs. external argv) and the output
location are deliberately excluded — the same search against the same oracle
must produce identical artifacts whether the oracle runs in-process or behind
the stdio protocol, and wherever the run directory lives.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .landscape import load_landscape
from .phase1 import Phase1Config
from .phase2 import Phase2Config
from .space import SearchSpace
from .sut import SutHandle, in_process, spawn_external

LANDSCAPE = "landscape"
EXTERNAL = "external"


@dataclass(frozen=True)
class SutSpec:
    kind: str  # LANDSCAPE | EXTERNAL
    path: str | None = None  # landscape file (LANDSCAPE)
    argv: tuple[str, ...] = ()  # child command (EXTERNAL)
    timeout: float = 30.0

    def to_json_dict(self) -> dict:
        if self.kind == LANDSCAPE:
            return {"kind": self.kind, "path": self.path}
        return {"kind": self.kind, "argv": list(self.argv), "timeout": self.timeout}


@dataclass(frozen=True)
class RunConfig:
    master_seed: int
    tree_path: str
    decoder_path: str
    sut: SutSpec
    nuisance: dict
    phase1: Phase1Config
    phase2: Phase2Config
    metrics_count: int = 200
    out_dir: str | None = None

    def fingerprint(self) -> str:
        return fingerprint_dict(self.canonical_dict())

    def canonical_dict(self) -> dict:
        """Fingerprint payload; file references enter by content hash."""
        return {
            "master_seed": self.master_seed,
            "tree_sha256": _file_sha256(self.tree_path),
            "decoder_sha256": _file_sha256(self.decoder_path),
            "nuisance": self.nuisance,
            "phase1": _phase1_dict(self.phase1),
            "phase2": _phase2_dict(self.phase2),
        }

    def resolved_dict(self) -> dict:
        """Full config as persisted into the run directory (resume identity)."""
        return {
            "master_seed": self.master_seed,
            "tree": self.tree_path,
            "decoder": self.decoder_path,
            "sut": self.sut.to_json_dict(),
            "nuisance": self.nuisance,
            "phase1": _phase1_dict(self.phase1),
            "phase2": _phase2_dict(self.phase2),
            "metrics_count": self.metrics_count,
        }

    def make_handle(self) -> SutHandle:
        if self.sut.kind == LANDSCAPE:
            return in_process(load_landscape(self.sut.path), self.nuisance)
        return spawn_external(self.sut.argv, self.nuisance, self.sut.timeout)


def fingerprint_dict(obj: dict) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _file_sha256(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _phase1_dict(cfg: Phase1Config) -> dict:
    return {
        "policy_bounds": {
            "lower": cfg.policy_bounds.lower.tolist(),
            "upper": cfg.policy_bounds.upper.tolist(),
        },
        "num_agents": cfg.num_agents,
        "samples_per_update": cfg.samples_per_update,
        "reward_offset": cfg.reward_offset,
        "diversity_weight": cfg.diversity_weight,
        "baseline_rate": cfg.baseline_rate,
        "adversarial_threshold": cfg.adversarial_threshold,
        "learning_rate": cfg.learning_rate,
        "max_iterations": cfg.max_iterations,
        "termination_window": cfg.termination_window,
        "policy_variance": cfg.policy_variance,
    }


def _phase2_dict(cfg: Phase2Config) -> dict:
    return {
        "adversarial_threshold": cfg.adversarial_threshold,
        "samples_per_slab": cfg.samples_per_slab,
        "delta_init": cfg.delta_init,
        "delta_min": cfg.delta_min,
        "delta_max": cfg.delta_max,
        "max_iterations": cfg.max_iterations,
        "reprobe_frozen": cfg.reprobe_frozen,
    }


def _bounds_from_dict(obj: dict) -> SearchSpace:
    try:
        lower, upper = obj["lower"], obj["upper"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"policy_bounds needs lower/upper: {exc}") from exc
    if np.isscalar(lower) or np.isscalar(upper):
        dims = obj.get("dims")
        if dims is None:
            raise ConfigError("scalar policy_bounds need an explicit 'dims'")
        lower = np.full(int(dims), float(lower))
        upper = np.full(int(dims), float(upper))
    return SearchSpace(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float),
                       label="policy")


def phase1_from_dict(obj: dict) -> Phase1Config:
    if "policy_bounds" not in obj:
        raise ConfigError("phase1 config needs policy_bounds")
    known = {
        "num_agents", "samples_per_update", "reward_offset", "diversity_weight",
        "baseline_rate", "adversarial_threshold", "learning_rate", "max_iterations",
        "termination_window", "policy_variance",
    }
    unknown = set(obj) - known - {"policy_bounds"}
    if unknown:
        raise ConfigError(f"unknown phase1 keys: {sorted(unknown)}")
    kwargs = {k: obj[k] for k in known if k in obj}
    return Phase1Config(policy_bounds=_bounds_from_dict(obj["policy_bounds"]), **kwargs)


def phase2_from_dict(obj: dict, default_threshold: float) -> Phase2Config:
    known = {"adversarial_threshold", "samples_per_slab", "delta_init",
             "delta_min", "delta_max", "max_iterations", "reprobe_frozen"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown phase2 keys: {sorted(unknown)}")
    kwargs = {k: obj[k] for k in known if k in obj}
    kwargs.setdefault("adversarial_threshold", default_threshold)
    return Phase2Config(**kwargs)


def _sut_from_dict(obj: dict, base_dir: Path) -> SutSpec:
    kind = obj.get("kind")
    if kind == LANDSCAPE:
        path = obj.get("path")
        if not path:
            raise ConfigError("sut.kind=landscape needs a 'path'")
        return SutSpec(LANDSCAPE, path=str(_resolve(base_dir, path)))
    if kind == EXTERNAL:
        argv = obj.get("argv")
        if not argv or not isinstance(argv, list):
            raise ConfigError("sut.kind=external needs a non-empty 'argv' list")
        return SutSpec(EXTERNAL, argv=tuple(str(a) for a in argv),
                       timeout=float(obj.get("timeout", 30.0)))
    raise ConfigError(f"unknown sut kind {kind!r}")


def _resolve(base_dir: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else (base_dir / p)


def resolve_run_config(obj: dict, base_dir: Path, seed_override: int | None = None) -> RunConfig:
    try:
        master_seed = int(obj["master_seed"]) if seed_override is None else int(seed_override)
        tree_path = _resolve(base_dir, obj["tree"])
        decoder_path = _resolve(base_dir, obj["decoder"])
        sut = _sut_from_dict(obj["sut"], base_dir)
        phase1 = phase1_from_dict(obj["phase1"])
    except KeyError as exc:
        raise ConfigError(f"run config is missing {exc}") from exc
    phase2 = phase2_from_dict(obj.get("phase2", {}), phase1.adversarial_threshold)
    nuisance = obj.get("nuisance", {})
    if not isinstance(nuisance, dict) or not all(isinstance(k, str) for k in nuisance):
        raise ConfigError("nuisance must be an object with string keys")
    try:
        json.dumps(nuisance)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"nuisance values must be JSON-serializable: {exc}") from exc
    for label, path in (("tree", tree_path), ("decoder", decoder_path)):
        if not os.path.isfile(path):
            raise ConfigError(f"{label} file {path} does not exist")
    if sut.kind == LANDSCAPE and not os.path.isfile(sut.path):
        raise ConfigError(f"landscape file {sut.path} does not exist")
    metrics_count = int(obj.get("metrics_count", 200))
    if metrics_count < 1:
        raise ConfigError("metrics_count must be >= 1")
    out_dir = obj.get("out_dir")
    return RunConfig(
        master_seed=master_seed,
        tree_path=str(tree_path),
        decoder_path=str(decoder_path),
        sut=sut,
        nuisance=nuisance,
        phase1=phase1,
        phase2=phase2,
        metrics_count=metrics_count,
        out_dir=str(_resolve(base_dir, out_dir)) if out_dir else None,
    )


def load_run_config(path: str, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve_run_config(obj, Path(path).resolve().parent, seed_override)
