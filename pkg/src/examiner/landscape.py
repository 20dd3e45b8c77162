"""Synthetic Gaussian-bump error landscapes.

A landscape assigns every pose a 3D error
``err3d = baseline + sum_k amplitude_k * exp(-||pose - center_k||^2 / (2 width_k^2))``
and a proportional 2D error ``err2d = err2d_ratio * err3d``. Superlevel sets
of an isolated bump have a closed-form radius, which is what makes these
landscapes brute-force checkable at desk scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch

# A training sample damps a bump when it lands within this many widths of the center.
TRAIN_OVERLAP_WIDTHS = 2.0


@dataclass(frozen=True)
class Bump:
    center: np.ndarray
    amplitude: float  # mm, > 0
    width: float  # radians, > 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.amplitude <= 0 or self.width <= 0:
            raise ConfigError("bump amplitude and width must be positive")


class SyntheticLandscape:
    """In-process error oracle. Evaluation is pure; ``train`` mutates amplitudes
    (only when ``trainable``), standing in for fine-tuning the model under test.
    """

    def __init__(
        self,
        baseline: float,
        bumps: list[Bump],
        err2d_ratio: float = 1.0,
        trainable: bool = False,
        damping: float = 0.5,
    ):
        if err2d_ratio <= 0:
            raise ConfigError("err2d_ratio must be positive")
        if baseline < 0:
            raise ConfigError("baseline must be non-negative")
        self.baseline = float(baseline)
        self.bumps = list(bumps)
        self.err2d_ratio = float(err2d_ratio)
        self.trainable = bool(trainable)
        self.damping = float(damping)
        self._amplitudes = np.array([b.amplitude for b in bumps], dtype=float)

    @property
    def dims(self) -> int | None:
        return None if not self.bumps else self.bumps[0].center.shape[0]

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amplitudes.copy()

    def err3d(self, poses: np.ndarray) -> np.ndarray:
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        if self.dims is not None and poses.shape[1] != self.dims:
            raise DimensionMismatch(
                f"landscape is {self.dims}-dimensional, poses have {poses.shape[1]} dims"
            )
        err = np.full(poses.shape[0], self.baseline)
        for amplitude, bump in zip(self._amplitudes, self.bumps):
            d2 = np.sum((poses - bump.center) ** 2, axis=1)
            err = err + amplitude * np.exp(-d2 / (2.0 * bump.width**2))
        return err

    def evaluate(self, poses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(err2d, err3d) arrays, one entry per pose, order-preserving."""
        e3 = self.err3d(poses)
        return self.err2d_ratio * e3, e3

    def train(self, poses: np.ndarray, lr_discount: float) -> bool:
        """Damp every bump that overlaps the sample batch; returns False when
        the landscape is not trainable.

        Overlap means some sample lies within ``TRAIN_OVERLAP_WIDTHS * width``
        of the bump center. Damping applies once per call regardless of how
        many samples overlap. ``lr_discount`` is accepted for interface parity
        with real SUTs; the synthetic damping factor comes from the landscape.
        """
        del lr_discount
        if not self.trainable:
            return False
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        if poses.shape[0] == 0 or poses.shape[1] == 0:
            return True
        for k, bump in enumerate(self.bumps):
            dmin = np.min(np.linalg.norm(poses - bump.center, axis=1))
            if dmin <= TRAIN_OVERLAP_WIDTHS * bump.width:
                self._amplitudes[k] *= self.damping
        return True

    def to_json_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "bumps": [
                {"center": b.center.tolist(), "amplitude": float(a), "width": b.width}
                for a, b in zip(self._amplitudes, self.bumps)
            ],
            "err2d_ratio": self.err2d_ratio,
            "trainable": self.trainable,
            "damping": self.damping,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SyntheticLandscape":
        try:
            bumps = [
                Bump(np.asarray(b["center"], dtype=float), float(b["amplitude"]), float(b["width"]))
                for b in obj.get("bumps", [])
            ]
            return cls(
                baseline=float(obj["baseline"]),
                bumps=bumps,
                err2d_ratio=float(obj.get("err2d_ratio", 1.0)),
                trainable=bool(obj.get("trainable", False)),
                damping=float(obj.get("damping", 0.5)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed landscape definition: {exc}") from exc


def load_landscape(path: str) -> SyntheticLandscape:
    try:
        with open(path, encoding="utf-8") as fh:
            return SyntheticLandscape.from_json_dict(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read landscape file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"landscape file {path} is not valid JSON: {exc}") from exc


def threshold_radius(amplitude: float, width: float, baseline: float, threshold: float) -> float:
    """Radius at which an isolated bump crosses err3d == threshold.

    Defined when baseline < threshold < baseline + amplitude.
    """
    excess = threshold - baseline
    if not 0.0 < excess < amplitude:
        raise ValueError("threshold must lie between baseline and the bump peak")
    return width * math.sqrt(2.0 * math.log(amplitude / excess))
