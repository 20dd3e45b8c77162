"""Search spaces, kinematic structure, pose validity, and latent decoders.

A pose is a flat float64 vector of joint rotations in radians; a latent is a
flat float64 vector in a box-constrained search space. Decoders map latents
to poses deterministically. Everything here is immutable after construction
and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigError, DimensionMismatch

Pose = np.ndarray
Latent = np.ndarray

# Verdict reasons
JOINT_LIMIT = "joint_limit"
HOOK_REJECTED = "hook_rejected"

# Slab / schedule sides
UPPER = "upper"
LOWER = "lower"

ValidityHook = Callable[[Pose], bool]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box of latent units (or radians)."""

    lower: np.ndarray
    upper: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lower", _freeze(self.lower))
        object.__setattr__(self, "upper", _freeze(self.upper))
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise ConfigError("search space bounds must be 1-d vectors of equal length")
        if not np.all(self.lower < self.upper):
            raise ConfigError(f"search space '{self.label}': lower must be < upper on every dim")

    @property
    def dims(self) -> int:
        return self.lower.shape[0]

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @classmethod
    def box(cls, dims: int, lower: float, upper: float, label: str = "") -> "SearchSpace":
        return cls(np.full(dims, float(lower)), np.full(dims, float(upper)), label)


@dataclass(frozen=True)
class Joint:
    """One articulation point owning a small group of pose dims (typically 3)."""

    name: str
    parent: int | None  # None at the root
    dims: tuple[int, ...]


@dataclass(frozen=True)
class KinematicTree:
    """Joints in topological order (parent before child) plus per-dim angle limits.

    Joints normally own 3 rotation dims; 1- or 2-dim joints are allowed so the
    same machinery drives low-dimensional synthetic spaces.
    """

    joints: tuple[Joint, ...]
    limits_low: np.ndarray
    limits_high: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "limits_low", _freeze(self.limits_low))
        object.__setattr__(self, "limits_high", _freeze(self.limits_high))
        seen: set[int] = set()
        for idx, joint in enumerate(self.joints):
            if joint.parent is not None and not (0 <= joint.parent < idx):
                raise ConfigError(f"joint '{joint.name}': parent must come earlier in the list")
            if not 1 <= len(joint.dims) <= 3:
                raise ConfigError(f"joint '{joint.name}': joints own 1 to 3 pose dims")
            if seen & set(joint.dims):
                raise ConfigError(f"joint '{joint.name}': pose dims assigned twice")
            seen.update(joint.dims)
        if seen != set(range(self.n_dims)):
            raise ConfigError("joint dims must partition 0..n_dims-1")
        if self.limits_low.shape != (self.n_dims,) or self.limits_high.shape != (self.n_dims,):
            raise ConfigError("limits must cover every pose dim")
        if not np.all(self.limits_low < self.limits_high):
            raise ConfigError("limits_low must be < limits_high on every dim")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_dims(self) -> int:
        return sum(len(j.dims) for j in self.joints)

    @classmethod
    def chain(
        cls,
        joint_dims: Sequence[int],
        limits_low: float | Sequence[float] = -np.pi,
        limits_high: float | Sequence[float] = np.pi,
    ) -> "KinematicTree":
        """A simple parent->child chain, handy for synthetic spaces."""
        joints = []
        cursor = 0
        for i, k in enumerate(joint_dims):
            joints.append(Joint(f"j{i}", None if i == 0 else i - 1, tuple(range(cursor, cursor + k))))
            cursor += k
        lo = np.broadcast_to(np.asarray(limits_low, dtype=float), (cursor,)).copy()
        hi = np.broadcast_to(np.asarray(limits_high, dtype=float), (cursor,)).copy()
        return cls(tuple(joints), lo, hi)

    def to_json_dict(self) -> dict:
        return {
            "joints": [
                {"name": j.name, "parent": j.parent, "dims": list(j.dims)} for j in self.joints
            ],
            "limits_low": self.limits_low.tolist(),
            "limits_high": self.limits_high.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "KinematicTree":
        try:
            joints = tuple(
                Joint(j["name"], j["parent"], tuple(int(d) for d in j["dims"]))
                for j in obj["joints"]
            )
            return cls(joints, np.asarray(obj["limits_low"], dtype=float),
                       np.asarray(obj["limits_high"], dtype=float))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed tree definition: {exc}") from exc


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    violated_dims: tuple[int, ...] = ()
    reason: str | None = None  # JOINT_LIMIT | HOOK_REJECTED | None


@dataclass(frozen=True)
class IdentityDecoder:
    dims: int

    @property
    def input_dims(self) -> int:
        return self.dims

    @property
    def output_dims(self) -> int:
        return self.dims

    def __call__(self, z: Latent) -> Pose:
        return np.array(z, dtype=float)


@dataclass(frozen=True)
class AffineDecoder:
    matrix: np.ndarray  # (output_dims, input_dims)
    offset: np.ndarray  # (output_dims,)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _freeze(np.atleast_2d(self.matrix)))
        object.__setattr__(self, "offset", _freeze(self.offset))
        if self.matrix.shape[0] != self.offset.shape[0]:
            raise ConfigError("affine decoder: matrix rows must match offset length")

    @property
    def input_dims(self) -> int:
        return self.matrix.shape[1]

    @property
    def output_dims(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, z: Latent) -> Pose:
        return self.matrix @ z + self.offset


@dataclass(frozen=True)
class SmoothDecoder:
    """Fixed-seed two-layer tanh map; coefficients are derived from the seed once."""

    seed: int
    in_dims: int
    out_dims: int
    hidden_dims: int = 32
    scale: float = 1.0
    _coeffs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        w1 = rng.normal(0.0, 1.0 / np.sqrt(self.in_dims), size=(self.hidden_dims, self.in_dims))
        b1 = rng.normal(0.0, 0.1, size=self.hidden_dims)
        w2 = rng.normal(0.0, 1.0 / np.sqrt(self.hidden_dims), size=(self.out_dims, self.hidden_dims))
        b2 = rng.normal(0.0, 0.1, size=self.out_dims)
        object.__setattr__(self, "_coeffs", tuple(_freeze(a) for a in (w1, b1, w2, b2)))

    @property
    def input_dims(self) -> int:
        return self.in_dims

    @property
    def output_dims(self) -> int:
        return self.out_dims

    def __call__(self, z: Latent) -> Pose:
        w1, b1, w2, b2 = self._coeffs
        return self.scale * np.tanh(w2 @ np.tanh(w1 @ z + b1) + b2)


Decoder = Union[IdentityDecoder, AffineDecoder, SmoothDecoder]


def decode(decoder: Decoder, z: Latent) -> Pose:
    """Map a latent to a pose. Pure; raises on dimension mismatch."""
    z = np.asarray(z, dtype=float)
    if z.shape != (decoder.input_dims,):
        raise DimensionMismatch(
            f"decoder expects {decoder.input_dims} dims, got shape {z.shape}"
        )
    return decoder(z)


def validate_pose(pose: Pose, tree: KinematicTree, hook: ValidityHook | None = None) -> ValidityVerdict:
    """Check joint-angle limits, then the optional validity hook.

    Always returns a verdict. Limit violations take precedence over the hook;
    ``violated_dims`` lists every out-of-limit dim.
    """
    pose = np.asarray(pose, dtype=float)
    if pose.shape != (tree.n_dims,):
        raise DimensionMismatch(f"pose has shape {pose.shape}, tree expects ({tree.n_dims},)")
    bad = np.nonzero((pose < tree.limits_low) | (pose > tree.limits_high))[0]
    if bad.size:
        return ValidityVerdict(False, tuple(int(i) for i in bad), JOINT_LIMIT)
    if hook is not None and not hook(pose):
        return ValidityVerdict(False, (), HOOK_REJECTED)
    return ValidityVerdict(True)


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Latent:
    """One i.i.d.-uniform point inside the box; deterministic given the stream."""
    return rng.uniform(space.lower, space.upper)


def joint_schedule(tree: KinematicTree) -> list[tuple[int, str]]:
    """One cycle of boundary-expansion targets: per joint in topological order,
    the upper side then the lower side."""
    out: list[tuple[int, str]] = []
    for j in range(tree.n_joints):
        out.append((j, UPPER))
        out.append((j, LOWER))
    return out


def load_tree(path: str) -> KinematicTree:
    try:
        with open(path, encoding="utf-8") as fh:
            return KinematicTree.from_json_dict(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read tree file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"tree file {path} is not valid JSON: {exc}") from exc


def default_tree() -> KinematicTree:
    """The bundled 21-joint SMPL-like tree. Limits are configuration, not ground truth."""
    data = resources.files("examiner.data").joinpath("smpl_like_tree.json").read_text("utf-8")
    return KinematicTree.from_json_dict(json.loads(data))


def decoder_from_json_dict(obj: dict) -> Decoder:
    try:
        kind = obj["kind"]
        if kind == "identity":
            return IdentityDecoder(int(obj["dims"]))
        if kind == "affine":
            return AffineDecoder(np.asarray(obj["matrix"], dtype=float),
                                 np.asarray(obj["offset"], dtype=float))
        if kind == "smooth":
            return SmoothDecoder(
                seed=int(obj["seed"]),
                in_dims=int(obj["in_dims"]),
                out_dims=int(obj["out_dims"]),
                hidden_dims=int(obj.get("hidden_dims", 32)),
                scale=float(obj.get("scale", 1.0)),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed decoder definition: {exc}") from exc
    raise ConfigError(f"unknown decoder kind {obj.get('kind')!r}")


def load_decoder(path: str) -> Decoder:
    try:
        with open(path, encoding="utf-8") as fh:
            return decoder_from_json_dict(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read decoder file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"decoder file {path} is not valid JSON: {exc}") from exc
