"""The system under test as a black-box error oracle.

Both flavors — the in-process synthetic landscape and an external process
speaking the stdio protocol — expose the same surface: evaluate a batch of
poses to (err2d, err3d) pairs, optionally accept a training hint, close.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, ProtocolError
from .landscape import SyntheticLandscape
from .protocol import DEFAULT_TIMEOUT, ProtocolClient

TRAINED = "trained"
UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class EvalResult:
    """Per-pose errors in mm."""

    err_2d: float
    err_3d: float


class EvalBatch(Sequence[EvalResult]):
    """Order-preserving batch of results; array views for the numeric paths."""

    def __init__(self, err2d: np.ndarray, err3d: np.ndarray):
        self.err2d = np.asarray(err2d, dtype=float)
        self.err3d = np.asarray(err3d, dtype=float)

    def __len__(self) -> int:
        return self.err2d.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return EvalBatch(self.err2d[i], self.err3d[i])
        return EvalResult(float(self.err2d[i]), float(self.err3d[i]))


class SutHandle:
    """Base handle; see ``InProcessSut`` and ``ExternalSut``."""

    nuisance: dict

    def evaluate_arrays(self, poses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def train_arrays(self, poses: np.ndarray, lr_discount: float) -> bool:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcessSut(SutHandle):
    def __init__(self, landscape: SyntheticLandscape, nuisance: dict | None = None):
        self.landscape = landscape
        self.nuisance = dict(nuisance or {})

    def evaluate_arrays(self, poses):
        return self.landscape.evaluate(poses)

    def train_arrays(self, poses, lr_discount):
        return self.landscape.train(poses, lr_discount)


class ExternalSut(SutHandle):
    def __init__(self, client: ProtocolClient, nuisance: dict):
        self.client = client
        self.nuisance = dict(nuisance)

    def evaluate_arrays(self, poses):
        return self.client.eval(poses)

    def train_arrays(self, poses, lr_discount):
        return self.client.train(poses, lr_discount)

    def close(self):
        self.client.close()


HandleFactory = Callable[[int], SutHandle]


def resolve_factory(handle_or_factory: Union[HandleFactory, SutHandle]) -> HandleFactory:
    """Accept either a per-agent factory or one shared handle."""
    if isinstance(handle_or_factory, SutHandle):
        return lambda _agent_id: handle_or_factory
    return handle_or_factory


def in_process(landscape: SyntheticLandscape, nuisance: dict | None = None) -> InProcessSut:
    return InProcessSut(landscape, nuisance)


def spawn_external(command: Sequence[str], nuisance: dict | None = None,
                   timeout: float = DEFAULT_TIMEOUT) -> ExternalSut:
    """Start a child SUT and complete the hello/ready handshake."""
    nuisance = dict(nuisance or {})
    client = ProtocolClient(command, nuisance, timeout)
    return ExternalSut(client, nuisance)


def evaluate(handle: SutHandle, poses: np.ndarray) -> EvalBatch:
    """One EvalResult per pose, order-preserving.

    Responses are checked for shape, finiteness, and non-negativity so a
    misbehaving SUT fails loudly instead of corrupting downstream metrics.
    """
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    if poses.shape[0] == 0:
        raise DimensionMismatch("evaluate requires a non-empty batch")
    err2d, err3d = handle.evaluate_arrays(poses)
    err2d = np.asarray(err2d, dtype=float)
    err3d = np.asarray(err3d, dtype=float)
    n = poses.shape[0]
    if err2d.shape != (n,) or err3d.shape != (n,):
        raise ProtocolError(f"SUT returned {err2d.shape}/{err3d.shape} errors for {n} poses")
    if not (np.all(np.isfinite(err2d)) and np.all(np.isfinite(err3d))):
        raise ProtocolError("SUT returned non-finite errors")
    if np.any(err2d < 0) or np.any(err3d < 0):
        raise ProtocolError("SUT returned negative errors")
    return EvalBatch(err2d, err3d)


def train_hint(handle: SutHandle, samples, lr_discount: float) -> str:
    """Forward a training hint; returns ``"trained"`` or ``"unsupported"``.

    ``samples`` is either an (N, D) array of poses or an iterable of
    ``(pose, nuisance_overrides)`` pairs; the wire format carries poses only,
    so overrides stay engine-side.
    """
    if isinstance(samples, np.ndarray):
        poses = np.atleast_2d(samples.astype(float)) if samples.size else np.empty((0, 0))
    else:
        rows = [np.asarray(p[0] if isinstance(p, tuple) else p, dtype=float) for p in samples]
        poses = np.stack(rows) if rows else np.empty((0, 0))
    return TRAINED if handle.train_arrays(poses, float(lr_discount)) else UNSUPPORTED
