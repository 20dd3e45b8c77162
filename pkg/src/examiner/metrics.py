"""Boundary-quality and robustness metrics over discovered failure modes.

Pnae (percentage of non-adversarial examples) and minMPJPE judge how tight a
box is; Region Size, Success Rate, and the mean/max/median errors judge how
robust the examined SUT is. Undefined metrics raise instead of silently
returning zeros — silent zeros corrupt benchmark tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import streams
from .errors import SampleRejection, UndefinedMetric
from .phase1 import AdversarialSeed
from .phase2 import FailureMode
from .space import KinematicTree, ValidityHook, validate_pose
from .sut import HandleFactory, SutHandle, evaluate, resolve_factory

OVERSAMPLE_LIMIT = 100  # max draw multiplier in rejection sampling


@dataclass(frozen=True)
class ModeStats:
    pnae: float  # fraction of samples with err3d strictly below the threshold
    min_mpjpe: float
    mean_mpjpe: float
    max_mpjpe: float
    median_mpjpe: float
    samples_used: int

    def to_json_dict(self) -> dict:
        return {
            "pnae": self.pnae,
            "min_mpjpe": self.min_mpjpe,
            "mean_mpjpe": self.mean_mpjpe,
            "max_mpjpe": self.max_mpjpe,
            "median_mpjpe": self.median_mpjpe,
            "samples_used": self.samples_used,
        }


@dataclass(frozen=True)
class RobustnessReport:
    success_rate: float
    region_size: float | None  # None when there are no modes to measure
    per_mode: tuple[tuple[int, ModeStats], ...]  # (agent_id, stats)
    aggregate: ModeStats | None
    threshold: float
    fingerprint: str = ""
    master_seed: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "master_seed": self.master_seed,
            "success_rate": self.success_rate,
            "region_size": self.region_size,
            "threshold": self.threshold,
            "per_mode": [
                {"agent_id": aid, **stats.to_json_dict()} for aid, stats in self.per_mode
            ],
            "aggregate": None if self.aggregate is None else self.aggregate.to_json_dict(),
        }


def region_size(modes: list[FailureMode]) -> float:
    """Mean L2 norm of (phi_up + phi_low) over modes, in radians."""
    if not modes:
        raise UndefinedMetric("region_size is undefined for an empty mode list")
    return float(np.mean([np.linalg.norm(m.phi_up + m.phi_low) for m in modes]))


def success_rate(seeds: list[AdversarialSeed]) -> float:
    """Succeeded agents over non-errored agents; errored ones are reported
    separately and participate in neither numerator nor denominator."""
    clean = [s for s in seeds if s.error is None]
    if not clean:
        raise UndefinedMetric("success_rate is undefined when every agent errored")
    return sum(1 for s in clean if s.succeeded) / len(clean)


def sample_mode(
    mode: FailureMode,
    count: int,
    tree: KinematicTree,
    rng: np.random.Generator,
    hook: ValidityHook | None = None,
) -> np.ndarray:
    """``count`` poses uniform over the mode's box, rejection-resampled through
    validate_pose. Raises after drawing 100x ``count`` candidates."""
    if count < 1:
        raise UndefinedMetric("sample_mode needs count >= 1")
    lower, upper = mode.lower, mode.upper
    kept: list[np.ndarray] = []
    drawn = 0
    while len(kept) < count:
        if drawn >= OVERSAMPLE_LIMIT * count:
            raise SampleRejection(
                f"mode {mode.agent_id}: fewer than {count} valid poses "
                f"in {drawn} draws"
            )
        batch = rng.uniform(lower, upper, size=(count, lower.shape[0]))
        drawn += count
        for pose in batch:
            if validate_pose(pose, tree, hook).valid:
                kept.append(pose)
                if len(kept) == count:
                    break
    return np.stack(kept)


def stats_from_errors(err3d: np.ndarray, threshold: float) -> ModeStats:
    err3d = np.asarray(err3d, dtype=float)
    if err3d.size == 0:
        raise UndefinedMetric("stats need at least one sample")
    return ModeStats(
        pnae=float(np.mean(err3d < threshold)),
        min_mpjpe=float(np.min(err3d)),
        mean_mpjpe=float(np.mean(err3d)),
        max_mpjpe=float(np.max(err3d)),
        median_mpjpe=float(np.median(err3d)),
        samples_used=int(err3d.size),
    )


SampleSink = Callable[[int, np.ndarray, float, float], None]  # (agent_id, pose, err2d, err3d)


def mode_stats(
    mode: FailureMode,
    handle: SutHandle,
    tree: KinematicTree,
    rng: np.random.Generator,
    count: int = 200,
    threshold: float = 90.0,
    hook: ValidityHook | None = None,
    sink: SampleSink | None = None,
) -> ModeStats:
    """Evaluate ``count`` uniform box samples; optionally persist each one."""
    poses = sample_mode(mode, count, tree, rng, hook)
    batch = evaluate(handle, poses)
    if sink is not None:
        for pose, e2, e3 in zip(poses, batch.err2d, batch.err3d):
            sink(mode.agent_id, pose, float(e2), float(e3))
    return stats_from_errors(batch.err3d, threshold)


def robustness_report(
    seeds: list[AdversarialSeed],
    modes: list[FailureMode],
    handle_factory: HandleFactory | SutHandle,
    tree: KinematicTree,
    master_seed: int,
    threshold: float = 90.0,
    count: int = 200,
    hook: ValidityHook | None = None,
    fingerprint: str = "",
    sink: SampleSink | None = None,
) -> RobustnessReport:
    """Assemble all metrics. Mode-level metrics are marked absent (None/empty)
    when there are no complete modes; aggregate stats pool every per-mode
    sample. Sampling streams are keyed by agent id, so a rerun reproduces the
    exact same samples."""
    factory = resolve_factory(handle_factory)
    usable = [m for m in modes if not m.incomplete]
    per_mode: list[tuple[int, ModeStats]] = []
    pooled: list[np.ndarray] = []
    for mode in usable:
        rng = streams.stream(master_seed, streams.METRICS_SAMPLE, mode.agent_id)
        poses = sample_mode(mode, count, tree, rng, hook)
        batch = evaluate(factory(mode.agent_id), poses)
        if sink is not None:
            for pose, e2, e3 in zip(poses, batch.err2d, batch.err3d):
                sink(mode.agent_id, pose, float(e2), float(e3))
        per_mode.append((mode.agent_id, stats_from_errors(batch.err3d, threshold)))
        pooled.append(batch.err3d)
    return RobustnessReport(
        success_rate=success_rate(seeds),
        region_size=region_size(usable) if usable else None,
        per_mode=tuple(per_mode),
        aggregate=stats_from_errors(np.concatenate(pooled), threshold) if pooled else None,
        threshold=threshold,
        fingerprint=fingerprint,
        master_seed=master_seed,
    )
