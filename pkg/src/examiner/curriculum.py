"""Adversary-set construction, epsilon-mixed batches, and the easy-to-difficult
fine-tuning loop.

Each loop re-instantiates the examiner from the next difficulty preset, runs
both search phases, samples the discovered failure modes into an append-only
adversary set, composes an exactly-stratified training batch, and forwards it
to the SUT's train hook. The engine never trains a model itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import streams
from .errors import ConfigError, ExaminerError, UndefinedMetric
from .metrics import RobustnessReport, robustness_report, sample_mode
from .phase1 import Phase1Config, run_phase1
from .phase2 import FailureMode, Phase2Config, seed_to_mode_pipeline
from .space import Decoder, KinematicTree, SearchSpace, ValidityHook
from .sut import SutHandle, TRAINED, evaluate, train_hint


@dataclass(frozen=True)
class DifficultyPreset:
    """A named examiner difficulty level (threshold, search width, nuisance)."""

    name: str
    adversarial_threshold: float
    policy_half_width: float
    nuisance: dict

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "adversarial_threshold": self.adversarial_threshold,
            "policy_half_width": self.policy_half_width,
            "nuisance": self.nuisance,
        }


def _rot(limit_y: float, limit_x: float, limit_z: float) -> dict:
    return {
        "global_rotation_limits": {
            "y": [-limit_y, limit_y],
            "x": [-limit_x, limit_x],
            "z": [-limit_z, limit_z],
        }
    }


PRESETS: dict[str, DifficultyPreset] = {
    "easy": DifficultyPreset("easy", 80.0, 1.5, _rot(0.0, 0.05 * math.pi, 0.0)),
    "standard": DifficultyPreset("standard", 90.0, 2.0,
                                 _rot(0.02 * math.pi, 0.02 * math.pi, 0.02 * math.pi)),
    "hard": DifficultyPreset("hard", 90.0, 3.0,
                             _rot(0.4 * math.pi, 0.05 * math.pi, 0.05 * math.pi)),
}


def get_preset(name: str) -> DifficultyPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown difficulty preset {name!r}") from None


def mixed_schedule(loops: int) -> tuple[str, ...]:
    """Default schedule: easy twice, standard twice, hard for the rest."""
    base = ["easy", "easy", "standard", "standard"]
    if loops <= len(base):
        return tuple(base[:loops])
    return tuple(base + ["hard"] * (loops - len(base)))


def apply_preset(
    phase1: Phase1Config, phase2: Phase2Config, preset: DifficultyPreset
) -> tuple[Phase1Config, Phase2Config]:
    """Re-parameterize the examiner for one loop: threshold and policy bounds
    come from the preset, everything else carries over."""
    bounds = SearchSpace.box(
        phase1.policy_bounds.dims, -preset.policy_half_width, preset.policy_half_width,
        label=preset.name,
    )
    return (
        replace(phase1, policy_bounds=bounds, adversarial_threshold=preset.adversarial_threshold),
        replace(phase2, adversarial_threshold=preset.adversarial_threshold),
    )


@dataclass(frozen=True)
class AdversaryRecord:
    pose: np.ndarray
    nuisance_overrides: dict
    mode_agent_id: int
    err_3d: float  # at sampling time

    def to_json_dict(self) -> dict:
        return {
            "pose": self.pose.tolist(),
            "nuisance_overrides": self.nuisance_overrides,
            "mode_id": self.mode_agent_id,
            "err_3d": self.err_3d,
        }


@dataclass
class AdversarySet:
    """Append-only pool of failure-mode samples, grown loop by loop."""

    records: list[AdversaryRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def extend(self, records: Sequence[AdversaryRecord]) -> None:
        self.records.extend(records)

    def poses(self, indices: np.ndarray) -> np.ndarray:
        return np.stack([self.records[int(i)].pose for i in indices])


@dataclass(frozen=True)
class CurriculumConfig:
    loops: int
    presets: tuple[str, ...] = ()  # empty means the mixed default schedule
    per_mode_samples: int = 500
    mix_fraction: float = 0.1
    lr_discount: float = 0.05
    batch_size: int = 1000

    def __post_init__(self):
        if self.loops < 0:
            raise ConfigError("curriculum.loops must be >= 0")
        if not 0.0 <= self.mix_fraction <= 1.0:
            raise ConfigError("curriculum.mix_fraction must lie in [0, 1]")
        if self.per_mode_samples < 1 or self.batch_size < 1:
            raise ConfigError("curriculum sample counts must be >= 1")
        for name in self.presets:
            get_preset(name)

    def schedule(self) -> tuple[str, ...]:
        if not self.presets:
            return mixed_schedule(self.loops)
        names = list(self.presets[: self.loops])
        while len(names) < self.loops:
            names.append(self.presets[-1])  # last preset carries the remaining loops
        return tuple(names)


def build_adversary_set(
    modes: list[FailureMode],
    per_mode: int,
    handle: SutHandle,
    tree: KinematicTree,
    master_seed: int,
    hook: ValidityHook | None = None,
    nuisance_overrides: dict | None = None,
) -> tuple[list[AdversaryRecord], list[str]]:
    """Sample every complete mode; each record carries its evaluation at
    sampling time. Per-mode failures leave a partial set, flagged via the
    returned error list."""
    if not modes:
        raise UndefinedMetric("build_adversary_set needs at least one mode")
    overrides = dict(nuisance_overrides or {})
    records: list[AdversaryRecord] = []
    failures: list[str] = []
    for mode in modes:
        if mode.incomplete:
            failures.append(f"mode {mode.agent_id}: skipped (incomplete: {mode.error})")
            continue
        try:
            rng = streams.stream(master_seed, streams.ADVERSARY_SAMPLE, mode.agent_id)
            poses = sample_mode(mode, per_mode, tree, rng, hook)
            batch = evaluate(handle, poses)
        except ExaminerError as exc:
            failures.append(f"mode {mode.agent_id}: {exc}")
            continue
        records.extend(
            AdversaryRecord(pose, overrides, mode.agent_id, float(e3))
            for pose, e3 in zip(poses, batch.err3d)
        )
    return records, failures


def epsilon_mix(
    adversary_size: int,
    base_size: int,
    fraction: float,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Exactly stratified batch composition: round(fraction*batch_size) indices
    into the adversary set, the remainder into the base set. Each side draws
    without replacement unless it is smaller than its share."""
    if batch_size < 1:
        raise ConfigError("epsilon_mix needs batch_size >= 1")
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError("epsilon_mix fraction must lie in [0, 1]")
    take_f = int(round(fraction * batch_size))
    take_b = batch_size - take_f
    if take_f > 0 and adversary_size == 0:
        raise ConfigError("epsilon_mix: adversary share requested but the set is empty")
    if take_b > 0 and base_size == 0:
        raise ConfigError("epsilon_mix: base share requested but the base set is empty")

    def _draw(pool: int, take: int) -> np.ndarray:
        if take == 0:
            return np.empty(0, dtype=np.int64)
        if pool >= take:
            return rng.choice(pool, size=take, replace=False)
        return rng.integers(0, pool, size=take)

    return _draw(adversary_size, take_f), _draw(base_size, take_b)


@dataclass(frozen=True)
class LoopOutcome:
    loop: int
    preset: DifficultyPreset
    modes: tuple[FailureMode, ...]  # persisted so adversary records stay traceable
    adversary_added: int
    trained: bool
    pre: RobustnessReport | None
    post_mean_mpjpe: float | None  # this loop's adversary samples, re-scored after training
    pre_mean_mpjpe: float | None
    error: str | None = None

    @property
    def modes_found(self) -> int:
        return len(self.modes)

    def to_json_dict(self) -> dict:
        return {
            "loop": self.loop,
            "preset": self.preset.to_json_dict(),
            "modes": [m.to_json_dict() for m in self.modes],
            "modes_found": self.modes_found,
            "adversary_added": self.adversary_added,
            "trained": self.trained,
            "pre_report": None if self.pre is None else self.pre.to_json_dict(),
            "pre_mean_mpjpe": self.pre_mean_mpjpe,
            "post_mean_mpjpe": self.post_mean_mpjpe,
            "error": self.error,
        }


@dataclass
class CurriculumReport:
    loops: list[LoopOutcome] = field(default_factory=list)
    stopped_reason: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "loops": [entry.to_json_dict() for entry in self.loops],
            "stopped_reason": self.stopped_reason,
        }


def run_curriculum(
    config: CurriculumConfig,
    base_phase1: Phase1Config,
    base_phase2: Phase2Config,
    decoder: Decoder,
    tree: KinematicTree,
    handle: SutHandle,
    master_seed: int,
    base_poses: np.ndarray | None = None,
    hook: ValidityHook | None = None,
    workers: int = 1,
    metrics_count: int = 200,
    fingerprint: str = "",
    adversary_sink=None,  # callable(dict) per persisted adversary record
) -> CurriculumReport:
    """Run the fine-tuning loop against one (shared, possibly trainable) handle.

    Loops are strictly sequential — each depends on the trained SUT. An
    unsupported train reply stops the schedule after the current loop's
    export; any loop failure aborts subsequent loops, leaving the partial
    report for the caller to persist.
    """
    report = CurriculumReport()
    adversary = AdversarySet()
    base_size = 0 if base_poses is None else int(np.atleast_2d(base_poses).shape[0])
    for loop_idx, preset_name in enumerate(config.schedule()):
        preset = get_preset(preset_name)
        phase1_cfg, phase2_cfg = apply_preset(base_phase1, base_phase2, preset)
        loop_seed = streams.derive_seed(master_seed, streams.CURRICULUM_LOOP, loop_idx)
        try:
            seeds = run_phase1(phase1_cfg, decoder, handle, loop_seed, tree,
                               hook=hook, workers=workers)
            modes = seed_to_mode_pipeline(seeds, handle, tree, phase2_cfg, loop_seed,
                                          hook=hook, workers=workers)
            usable = [m for m in modes if not m.incomplete]
            pre = robustness_report(
                seeds, modes, handle, tree, loop_seed,
                threshold=phase1_cfg.adversarial_threshold, count=metrics_count,
                hook=hook, fingerprint=fingerprint,
            )
            delta: list[AdversaryRecord] = []
            if usable:
                delta, failures = build_adversary_set(
                    usable, config.per_mode_samples, handle, tree, loop_seed,
                    hook=hook, nuisance_overrides=preset.nuisance,
                )
                if failures:
                    raise ExaminerError("; ".join(failures))
            adversary.extend(delta)
            if adversary_sink is not None:
                for record in delta:
                    adversary_sink({"loop": loop_idx, **record.to_json_dict()})

            trained = False
            post_mean = None
            pre_mean = None
            if delta:
                pre_mean = float(np.mean([r.err_3d for r in delta]))
            if len(adversary) > 0:
                mix_rng = streams.stream(master_seed, streams.BATCH_MIX, loop_idx)
                f_idx, b_idx = epsilon_mix(len(adversary), base_size,
                                           config.mix_fraction, config.batch_size, mix_rng)
                parts = [adversary.poses(f_idx)] if f_idx.size else []
                if b_idx.size:
                    parts.append(np.atleast_2d(base_poses)[b_idx])
                batch_poses = np.concatenate(parts) if parts else np.empty((0, tree.n_dims))
                trained = train_hint(handle, batch_poses, config.lr_discount) == TRAINED
                if trained and delta:
                    rescored = evaluate(handle, np.stack([r.pose for r in delta]))
                    post_mean = float(np.mean(rescored.err3d))
            report.loops.append(LoopOutcome(
                loop=loop_idx,
                preset=preset,
                modes=tuple(usable),
                adversary_added=len(delta),
                trained=trained,
                pre=pre,
                pre_mean_mpjpe=pre_mean,
                post_mean_mpjpe=post_mean,
            ))
            if len(adversary) > 0 and not trained:
                report.stopped_reason = "train unsupported by SUT"
                break
        except ExaminerError as exc:
            report.loops.append(LoopOutcome(
                loop=loop_idx, preset=preset, modes=(), adversary_added=0,
                trained=False, pre=None, pre_mean_mpjpe=None, post_mean_mpjpe=None,
                error=str(exc),
            ))
            report.stopped_reason = f"loop {loop_idx} failed: {exc}"
            break
    return report
