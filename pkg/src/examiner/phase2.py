"""Phase 2: expand each adversarial seed into an axis-aligned failure box.

The expansion walks the kinematic tree joint by joint (upper side, then lower
side), probing a slab of width delta beyond the current bound on that joint's
dims while holding every other dim at the seed pose. A slab is accepted when
all its poses are valid and the minimum 3D error stays above the adversarial
threshold; the step size then adapts linearly to the error margin. A side
that fails once is frozen for the rest of the run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .errors import ConfigError, ExaminerError
from .phase1 import AdversarialSeed, LogSink
from .space import LOWER, UPPER, KinematicTree, ValidityHook, joint_schedule, validate_pose
from .sut import HandleFactory, SutHandle, evaluate, resolve_factory


@dataclass(frozen=True)
class Phase2Config:
    adversarial_threshold: float = 90.0  # mm
    samples_per_slab: int = 50
    delta_init: float = 0.05  # radians
    delta_min: float = 0.005
    delta_max: float = 0.05
    max_iterations: int = 300
    # When True, a side that fails acceptance is retried on later cycles
    # instead of being frozen; fully capped sides freeze either way.
    reprobe_frozen: bool = False

    def __post_init__(self):
        if self.samples_per_slab < 1:
            raise ConfigError("phase2.samples_per_slab must be >= 1")
        if not 0 < self.delta_min <= self.delta_max:
            raise ConfigError("phase2 requires 0 < delta_min <= delta_max")
        if not 0 < self.delta_init <= self.delta_max:
            raise ConfigError("phase2.delta_init must lie in (0, delta_max]")
        if self.max_iterations < 1 or self.adversarial_threshold <= 0:
            raise ConfigError("phase2 iteration cap and threshold must be positive")


@dataclass
class FailureMode:
    """Axis-aligned failure subspace [seed - phi_low, seed + phi_up]."""

    agent_id: int
    seed: np.ndarray
    phi_up: np.ndarray  # non-negative, radians
    phi_low: np.ndarray
    iterations_used: int = 0
    frozen: dict[str, bool] = field(default_factory=dict)  # "j:side" -> bool
    error: str | None = None

    @property
    def incomplete(self) -> bool:
        return self.error is not None

    @property
    def lower(self) -> np.ndarray:
        return self.seed - self.phi_low

    @property
    def upper(self) -> np.ndarray:
        return self.seed + self.phi_up

    def to_json_dict(self) -> dict:
        out = {
            "agent_id": self.agent_id,
            "seed": self.seed.tolist(),
            "phi_up": self.phi_up.tolist(),
            "phi_low": self.phi_low.tolist(),
            "iterations_used": self.iterations_used,
            "frozen": dict(self.frozen),
        }
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "FailureMode":
        return cls(
            agent_id=int(obj["agent_id"]),
            seed=np.asarray(obj["seed"], dtype=float),
            phi_up=np.asarray(obj["phi_up"], dtype=float),
            phi_low=np.asarray(obj["phi_low"], dtype=float),
            iterations_used=int(obj.get("iterations_used", 0)),
            frozen=dict(obj.get("frozen", {})),
            error=obj.get("error"),
        )


def _pair_key(joint: int, side: str) -> str:
    return f"{joint}:{side}"


def slab_samples(
    mode: FailureMode,
    joint: int,
    side: str,
    delta: float,
    count: int,
    tree: KinematicTree,
    rng: np.random.Generator,
) -> np.ndarray | None:
    """``count`` poses equal to the seed everywhere except the chosen joint's
    dims, which are drawn uniformly from the next slab beyond the current
    bound (clipped to joint limits). Returns None when the slab has nowhere
    left to go on any of the joint's dims (the empty-slab signal).
    """
    if delta <= 0:
        raise ConfigError("slab delta must be positive")
    dims = np.array(tree.joints[joint].dims, dtype=int)
    seed = mode.seed
    if side == UPPER:
        caps = tree.limits_high[dims] - seed[dims]
        if np.all(mode.phi_up[dims] >= caps):
            return None
        lo = np.minimum(seed[dims] + mode.phi_up[dims], tree.limits_high[dims])
        hi = np.minimum(lo + delta, tree.limits_high[dims])
    elif side == LOWER:
        caps = seed[dims] - tree.limits_low[dims]
        if np.all(mode.phi_low[dims] >= caps):
            return None
        hi = np.maximum(seed[dims] - mode.phi_low[dims], tree.limits_low[dims])
        lo = np.maximum(hi - delta, tree.limits_low[dims])
    else:
        raise ConfigError(f"unknown slab side {side!r}")
    poses = np.tile(seed, (count, 1))
    poses[:, dims] = rng.uniform(lo, hi, size=(count, dims.size))
    return poses


def update_step_size(min_err: float, threshold: float,
                     delta_min: float = 0.005, delta_max: float = 0.05) -> float:
    """Error-adaptive step size: delta_min at the threshold, growing by
    0.001 rad per mm of error margin, capped at delta_max.

    Computed as (margin + 1000*delta_min)/1000 — algebraically the same
    linear schedule, but exact at the schedule's round points (a literal
    0.001*45 + 0.005 lands one ulp under 0.05 in float64).
    """
    return min((min_err - threshold + 1000.0 * delta_min) / 1000.0, delta_max)


def _advance(mode: FailureMode, joint: int, side: str, delta: float, tree: KinematicTree) -> bool:
    """Grow phi by delta on the joint's dims, capped at the joint limits.
    Returns False when no dim actually moved (fully capped)."""
    dims = np.array(tree.joints[joint].dims, dtype=int)
    if side == UPPER:
        caps = tree.limits_high[dims] - mode.seed[dims]
        new = np.minimum(mode.phi_up[dims] + delta, caps)
        moved = bool(np.any(new > mode.phi_up[dims]))
        mode.phi_up[dims] = new
    else:
        caps = mode.seed[dims] - tree.limits_low[dims]
        new = np.minimum(mode.phi_low[dims] + delta, caps)
        moved = bool(np.any(new > mode.phi_low[dims]))
        mode.phi_low[dims] = new
    return moved


def expand_boundary(
    seed: AdversarialSeed,
    handle: SutHandle,
    tree: KinematicTree,
    config: Phase2Config,
    rng: np.random.Generator,
    hook: ValidityHook | None = None,
    log: LogSink | None = None,
) -> FailureMode:
    """Grow the failure box around one seed until every (joint, side) is
    frozen or the iteration cap is reached. phi grows monotonically and never
    exceeds the joint limits."""
    if not seed.succeeded:
        raise ConfigError(f"agent {seed.agent_id}: cannot expand an unsucceeded seed")
    if not validate_pose(seed.pose_star, tree, hook).valid:
        raise ConfigError(f"agent {seed.agent_id}: seed pose is not valid")
    schedule = joint_schedule(tree)
    mode = FailureMode(
        agent_id=seed.agent_id,
        seed=np.array(seed.pose_star, dtype=float),
        phi_up=np.zeros(tree.n_dims),
        phi_low=np.zeros(tree.n_dims),
        frozen={_pair_key(j, s): False for j, s in schedule},
    )
    delta = config.delta_init
    iterations = 0
    cursor = 0
    try:
        while iterations < config.max_iterations and not all(mode.frozen.values()):
            joint, side = schedule[cursor % len(schedule)]
            cursor += 1
            if mode.frozen[_pair_key(joint, side)]:
                continue
            iterations += 1
            samples = slab_samples(mode, joint, side, delta, config.samples_per_slab, tree, rng)
            if samples is None:
                mode.frozen[_pair_key(joint, side)] = True
                _log_slab(log, mode, iterations, joint, side, delta, None, False)
                continue
            valid_mask = np.array([validate_pose(p, tree, hook).valid for p in samples])
            min_err = None
            if valid_mask.any():
                batch = evaluate(handle, samples[valid_mask])
                min_err = float(np.min(batch.err3d))
            accepted = bool(valid_mask.all()) and min_err is not None \
                and min_err > config.adversarial_threshold
            _log_slab(log, mode, iterations, joint, side, delta, min_err, accepted)
            if accepted:
                if not _advance(mode, joint, side, delta, tree):
                    mode.frozen[_pair_key(joint, side)] = True
                    continue
                delta = update_step_size(min_err, config.adversarial_threshold,
                                         config.delta_min, config.delta_max)
            elif not config.reprobe_frozen:
                mode.frozen[_pair_key(joint, side)] = True
    except ExaminerError as exc:
        mode.error = str(exc)
    mode.iterations_used = iterations
    return mode


def _log_slab(log: LogSink | None, mode: FailureMode, iteration: int, joint: int,
              side: str, delta: float, min_err: float | None, accepted: bool) -> None:
    if log is not None:
        log({
            "agent": mode.agent_id,
            "iter": iteration,
            "joint": joint,
            "side": side,
            "delta": delta,
            "slab_min_err": min_err,
            "accepted": accepted,
        })


def seed_to_mode_pipeline(
    seeds: list[AdversarialSeed],
    handle_factory: HandleFactory | SutHandle,
    tree: KinematicTree,
    config: Phase2Config,
    master_seed: int,
    hook: ValidityHook | None = None,
    workers: int = 1,
    log: LogSink | None = None,
) -> list[FailureMode]:
    """Expand every succeeded seed (skipping the rest), in parallel, each on
    its own deterministic stream. Per-seed failures are isolated into the
    returned mode's ``error`` field. Results and log records come back in
    agent-id order regardless of worker count."""
    factory = resolve_factory(handle_factory)
    targets = [s for s in seeds if s.succeeded]

    def _expand(seed: AdversarialSeed) -> tuple[FailureMode, list[dict]]:
        records: list[dict] = []
        rng = streams.stream(master_seed, streams.PHASE2_EXPAND, seed.agent_id)
        try:
            mode = expand_boundary(seed, factory(seed.agent_id), tree, config, rng,
                                   hook=hook, log=records.append)
        except ExaminerError as exc:
            mode = FailureMode(
                agent_id=seed.agent_id,
                seed=np.array(seed.pose_star, dtype=float),
                phi_up=np.zeros(tree.n_dims),
                phi_low=np.zeros(tree.n_dims),
                error=str(exc),
            )
        return mode, records

    if workers > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_expand, targets))
    else:
        results = [_expand(s) for s in targets]

    modes = []
    for mode, records in sorted(results, key=lambda pair: pair[0].agent_id):
        if log is not None:
            for rec in records:
                log(rec)
        modes.append(mode)
    return modes
