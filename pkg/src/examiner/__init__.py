"""Black-box robustness examiner.

Searches the continuous parameter space of a system under test for failure
modes with a population of policy-gradient agents, expands each find into an
axis-aligned failure subspace with measured boundaries, and exports metrics
and adversary sets for retraining.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DimensionMismatch,
    ExaminerError,
    IncompleteRun,
    ProtocolError,
    SampleRejection,
    UndefinedMetric,
)
from .landscape import Bump, SyntheticLandscape, load_landscape, threshold_radius
from .metrics import ModeStats, RobustnessReport, mode_stats, region_size, robustness_report, sample_mode, success_rate
from .phase1 import (
    AdversarialSeed,
    AgentPolicy,
    IterationRecord,
    Phase1Config,
    agent_step,
    diversity_force,
    reinforce_gradient,
    reward,
    run_phase1,
    score_gradient,
    update_baseline,
)
from .phase2 import FailureMode, Phase2Config, expand_boundary, seed_to_mode_pipeline, slab_samples, update_step_size
from .space import (
    AffineDecoder,
    IdentityDecoder,
    KinematicTree,
    SearchSpace,
    SmoothDecoder,
    ValidityVerdict,
    decode,
    default_tree,
    joint_schedule,
    load_decoder,
    load_tree,
    sample_uniform,
    validate_pose,
)
from .sut import EvalBatch, EvalResult, SutHandle, evaluate, in_process, spawn_external, train_hint

import types as _types

__all__ = sorted(
    name for name, obj in list(globals().items())
    if not name.startswith("_") and not isinstance(obj, _types.ModuleType)
)
