"""Phase 1: multi-agent worst-case search.

Each agent owns a Gaussian policy over the latent space (fixed variance,
learned mean) and climbs the SUT's 2D error via the REINFORCE estimator with
a moving baseline, plus a repulsive term that keeps the population spread out.
An agent terminates once the trailing mean of its per-iteration 3D errors
exceeds the adversarial threshold.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import streams
from .errors import ConfigError, ExaminerError, SampleRejection
from .space import (
    Decoder,
    KinematicTree,
    SearchSpace,
    ValidityHook,
    decode,
    sample_uniform,
    validate_pose,
)
from .sut import HandleFactory, SutHandle, evaluate, resolve_factory

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
MAX_REDRAWS = 100
MIN_DIVERSITY_DISTANCE = 1e-9

LogSink = Callable[[dict], None]


@dataclass(frozen=True)
class Phase1Config:
    policy_bounds: SearchSpace
    num_agents: int = 8
    samples_per_update: int = 8
    reward_offset: float = 50.0  # mm
    diversity_weight: float = 0.2
    baseline_rate: float = 0.1
    adversarial_threshold: float = 90.0  # mm
    learning_rate: float = 0.2
    max_iterations: int = 300
    termination_window: int = 10
    policy_variance: float = 0.05

    def __post_init__(self):
        positive = {
            "num_agents": self.num_agents,
            "samples_per_update": self.samples_per_update,
            "reward_offset": self.reward_offset,
            "baseline_rate": self.baseline_rate,
            "adversarial_threshold": self.adversarial_threshold,
            "learning_rate": self.learning_rate,
            "max_iterations": self.max_iterations,
            "termination_window": self.termination_window,
            "policy_variance": self.policy_variance,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"phase1.{name} must be positive, got {value}")
        if self.diversity_weight < 0:
            raise ConfigError("phase1.diversity_weight must be >= 0")
        if self.baseline_rate > 1:
            raise ConfigError("phase1.baseline_rate must be <= 1")
        if self.termination_window > self.max_iterations:
            raise ConfigError("phase1.termination_window must be <= max_iterations")


@dataclass(frozen=True)
class AgentPolicy:
    """Gaussian search policy: mean vector, fixed variance, moving baseline,
    and the first/second moment accumulators of the adaptive ascent step."""

    agent_id: int
    mean: np.ndarray
    variance: float
    baseline: float
    moment1: np.ndarray
    moment2: np.ndarray
    step_count: int = 0

    @classmethod
    def fresh(cls, agent_id: int, mean: np.ndarray, variance: float, baseline: float = 0.5) -> "AgentPolicy":
        mean = np.asarray(mean, dtype=float)
        zeros = np.zeros_like(mean)
        return cls(agent_id, mean, float(variance), float(baseline), zeros, zeros.copy())


@dataclass(frozen=True)
class IterationRecord:
    agent_id: int
    iteration: int  # 1-based
    mean_err2d: float
    mean_err3d: float
    mean_reward: float
    baseline: float  # after this iteration's update
    mean: np.ndarray  # policy mean after this iteration's update

    def to_json_dict(self) -> dict:
        return {
            "agent": self.agent_id,
            "iter": self.iteration,
            "mean_err2d": self.mean_err2d,
            "mean_err3d": self.mean_err3d,
            "mean_reward": self.mean_reward,
            "baseline": self.baseline,
            "mu": self.mean.tolist(),
        }


@dataclass(frozen=True)
class AdversarialSeed:
    agent_id: int
    z_star: np.ndarray
    pose_star: np.ndarray
    err_2d: float
    err_3d: float
    iterations_used: int
    succeeded: bool
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "z_star": self.z_star.tolist(),
            "pose_star": self.pose_star.tolist(),
            # NaN (errored agents) is not valid JSON; persist as null.
            "err_2d": None if math.isnan(self.err_2d) else self.err_2d,
            "err_3d": None if math.isnan(self.err_3d) else self.err_3d,
            "iterations_used": self.iterations_used,
            "succeeded": self.succeeded,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "AdversarialSeed":
        return cls(
            agent_id=int(obj["agent_id"]),
            z_star=np.asarray(obj["z_star"], dtype=float),
            pose_star=np.asarray(obj["pose_star"], dtype=float),
            err_2d=math.nan if obj["err_2d"] is None else float(obj["err_2d"]),
            err_3d=math.nan if obj["err_3d"] is None else float(obj["err_3d"]),
            iterations_used=int(obj["iterations_used"]),
            succeeded=bool(obj["succeeded"]),
            error=obj.get("error"),
        )


def reward(err_2d, offset: float):
    """R = offset - err2d; larger model error means larger reward."""
    return offset - err_2d


def score_gradient(policy: AgentPolicy, z: np.ndarray) -> np.ndarray:
    """Gradient of log N(z; mean, variance*I) with respect to the mean."""
    return (np.asarray(z, dtype=float) - policy.mean) / policy.variance


def reinforce_gradient(policy: AgentPolicy, zs: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    """Baseline-subtracted score-function estimate of the reward-ascent gradient."""
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    rewards = np.asarray(rewards, dtype=float)
    if zs.shape[0] != rewards.shape[0] or zs.shape[0] < 1:
        raise ConfigError("reinforce_gradient: need K >= 1 samples with matching rewards")
    scores = (zs - policy.mean) / policy.variance
    return np.mean(scores * (rewards - policy.baseline)[:, None], axis=0)


def diversity_force(means: np.ndarray, agent_index: int, weight: float) -> np.ndarray:
    """Gradient (w.r.t. agent i's mean) of the weighted mean pairwise L2
    distance to the other agents. Coincident pairs contribute nothing."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    n = means.shape[0]
    force = np.zeros(means.shape[1])
    if n <= 1 or weight == 0.0:
        return force
    mine = means[agent_index]
    for j in range(n):
        if j == agent_index:
            continue
        diff = mine - means[j]
        dist = float(np.linalg.norm(diff))
        if dist >= MIN_DIVERSITY_DISTANCE:
            force += diff / dist
    return weight * force / (n - 1)


def update_baseline(baseline: float, rate: float, mean_reward: float) -> float:
    return (1.0 - rate) * baseline + rate * mean_reward


def _adam_ascend(policy: AgentPolicy, grad: np.ndarray, lr: float, bounds: SearchSpace) -> AgentPolicy:
    t = policy.step_count + 1
    m1 = ADAM_BETA1 * policy.moment1 + (1.0 - ADAM_BETA1) * grad
    m2 = ADAM_BETA2 * policy.moment2 + (1.0 - ADAM_BETA2) * grad * grad
    m1_hat = m1 / (1.0 - ADAM_BETA1**t)
    m2_hat = m2 / (1.0 - ADAM_BETA2**t)
    mean = policy.mean + lr * m1_hat / (np.sqrt(m2_hat) + ADAM_EPS)
    return replace(policy, mean=bounds.clamp(mean), moment1=m1, moment2=m2, step_count=t)


def _draw_valid_samples(
    policy: AgentPolicy,
    decoder: Decoder,
    tree: KinematicTree,
    config: Phase1Config,
    rng: np.random.Generator,
    hook: ValidityHook | None,
) -> tuple[np.ndarray, np.ndarray]:
    """K latents ~ N(mean, variance*I) clamped to bounds, decoded, validated.
    Invalid poses are redrawn, up to MAX_REDRAWS times each."""
    sigma = math.sqrt(config.policy_variance)
    k = config.samples_per_update
    zs = np.empty((k, config.policy_bounds.dims))
    poses = []
    for i in range(k):
        for _ in range(MAX_REDRAWS + 1):
            z = config.policy_bounds.clamp(rng.normal(policy.mean, sigma))
            pose = decode(decoder, z)
            if validate_pose(pose, tree, hook).valid:
                break
        else:
            raise SampleRejection(
                f"agent {policy.agent_id}: no valid pose after {MAX_REDRAWS} redraws"
            )
        zs[i] = z
        poses.append(pose)
    return zs, np.stack(poses)


def agent_step(
    policy: AgentPolicy,
    decoder: Decoder,
    handle: SutHandle,
    config: Phase1Config,
    rng: np.random.Generator,
    tree: KinematicTree,
    mean_snapshot: np.ndarray,
    iteration: int,
    hook: ValidityHook | None = None,
) -> tuple[AgentPolicy, IterationRecord]:
    """One policy-gradient ascent step. On evaluation failure the exception
    propagates and the policy is left untouched."""
    zs, poses = _draw_valid_samples(policy, decoder, tree, config, rng, hook)
    batch = evaluate(handle, poses)
    rewards = reward(batch.err2d, config.reward_offset)
    # The reward falls as the SUT's error grows, and the search climbs error:
    # ascend the negated estimator. The baseline keeps the advantage centered
    # under either sign.
    grad = -reinforce_gradient(policy, zs, rewards)
    grad = grad + diversity_force(mean_snapshot, policy.agent_id, config.diversity_weight)
    updated = _adam_ascend(policy, grad, config.learning_rate, config.policy_bounds)
    updated = replace(
        updated,
        baseline=update_baseline(policy.baseline, config.baseline_rate, float(np.mean(rewards))),
    )
    record = IterationRecord(
        agent_id=policy.agent_id,
        iteration=iteration,
        mean_err2d=float(np.mean(batch.err2d)),
        mean_err3d=float(np.mean(batch.err3d)),
        mean_reward=float(np.mean(rewards)),
        baseline=updated.baseline,
        mean=updated.mean.copy(),
    )
    return updated, record


def _finish_seed(
    agent_id: int,
    z_star: np.ndarray,
    decoder: Decoder,
    handle: SutHandle,
    iterations_used: int,
    succeeded: bool,
) -> AdversarialSeed:
    pose_star = decode(decoder, z_star)
    try:
        res = evaluate(handle, pose_star[None, :])[0]
    except ExaminerError as exc:
        return AdversarialSeed(agent_id, z_star, pose_star, math.nan, math.nan,
                               iterations_used, False, error=str(exc))
    return AdversarialSeed(agent_id, z_star, pose_star, res.err_2d, res.err_3d,
                           iterations_used, succeeded)


def run_phase1(
    config: Phase1Config,
    decoder: Decoder,
    handle_factory: HandleFactory | SutHandle,
    master_seed: int,
    tree: KinematicTree,
    hook: ValidityHook | None = None,
    workers: int = 1,
    log: LogSink | None = None,
) -> list[AdversarialSeed]:
    """Run all agents in iteration lockstep and return one seed per agent.

    Agents step in parallel within an iteration; cross-agent reads (the
    diversity term) use a snapshot of means taken at iteration start, and each
    agent owns its rng stream, so results do not depend on worker count.
    Per-agent evaluation failures mark that agent failed-with-error and leave
    the others running.
    """
    if decoder.input_dims != config.policy_bounds.dims:
        raise ConfigError("decoder input dims must match the policy search space")
    if decoder.output_dims != tree.n_dims:
        raise ConfigError("decoder output dims must match the kinematic tree")
    factory = resolve_factory(handle_factory)
    n = config.num_agents
    handles = [factory(i) for i in range(n)]
    step_rngs = [streams.stream(master_seed, streams.PHASE1_STEP, i) for i in range(n)]
    policies = [
        AgentPolicy.fresh(
            i,
            sample_uniform(config.policy_bounds, streams.stream(master_seed, streams.PHASE1_INIT, i)),
            config.policy_variance,
        )
        for i in range(n)
    ]
    err3d_history: list[list[float]] = [[] for _ in range(n)]
    seeds: dict[int, AdversarialSeed] = {}
    active = list(range(n))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for iteration in range(1, config.max_iterations + 1):
            if not active:
                break
            snapshot = np.stack([p.mean for p in policies])

            def _step(i: int):
                return agent_step(policies[i], decoder, handles[i], config,
                                  step_rngs[i], tree, snapshot, iteration, hook)

            if pool is not None:
                outcomes = list(pool.map(lambda i: _capture(_step, i), active))
            else:
                outcomes = [_capture(_step, i) for i in active]

            still_active = []
            for i, outcome in zip(active, outcomes):
                if isinstance(outcome, ExaminerError):
                    seeds[i] = AdversarialSeed(i, policies[i].mean.copy(),
                                               decode(decoder, policies[i].mean),
                                               math.nan, math.nan, iteration, False,
                                               error=str(outcome))
                    continue
                updated, record = outcome
                if log is not None:
                    log(record.to_json_dict())
                err3d_history[i].append(record.mean_err3d)
                window = config.termination_window
                if (
                    len(err3d_history[i]) >= window
                    and float(np.mean(err3d_history[i][-window:])) > config.adversarial_threshold
                ):
                    # Terminate without applying this iteration's update: the
                    # mean that generated the triggering samples is the output.
                    seeds[i] = _finish_seed(i, snapshot[i].copy(), decoder, handles[i],
                                            iteration, succeeded=True)
                else:
                    policies[i] = updated
                    still_active.append(i)
            active = still_active
        for i in active:  # iteration cap reached
            seeds[i] = _finish_seed(i, policies[i].mean.copy(), decoder, handles[i],
                                    config.max_iterations, succeeded=False)
    finally:
        if pool is not None:
            pool.shutdown()
    return [seeds[i] for i in range(n)]


def _capture(fn, i):
    try:
        return fn(i)
    except ExaminerError as exc:
        return exc
