"""Gaussian-bump error landscape mirroring the examiner's in-process oracle.

Same JSON schema, same double-precision formula:
``err3d = baseline + sum_k amplitude_k * exp(-||pose - center_k||^2 / (2 width_k^2))``,
``err2d = err2d_ratio * err3d``. Exists to prove protocol transparency; real
deployments replace it with a wrapped model.
"""

from __future__ import annotations

import json
import math

TRAIN_OVERLAP_WIDTHS = 2.0


class MirrorLandscape:
    def __init__(self, baseline: float, bumps: list[dict], err2d_ratio: float = 1.0,
                 trainable: bool = False, damping: float = 0.5):
        self.baseline = float(baseline)
        self.centers = [[float(x) for x in b["center"]] for b in bumps]
        self.amplitudes = [float(b["amplitude"]) for b in bumps]
        self.widths = [float(b["width"]) for b in bumps]
        self.err2d_ratio = float(err2d_ratio)
        self.trainable = bool(trainable)
        self.damping = float(damping)
        for amplitude, width in zip(self.amplitudes, self.widths):
            if amplitude <= 0 or width <= 0:
                raise ValueError("bump amplitude and width must be positive")

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MirrorLandscape":
        return cls(
            baseline=obj["baseline"],
            bumps=obj.get("bumps", []),
            err2d_ratio=obj.get("err2d_ratio", 1.0),
            trainable=obj.get("trainable", False),
            damping=obj.get("damping", 0.5),
        )

    def err3d_single(self, pose: list[float]) -> float:
        err = self.baseline
        for center, amplitude, width in zip(self.centers, self.amplitudes, self.widths):
            d2 = sum((p - c) ** 2 for p, c in zip(pose, center))
            err += amplitude * math.exp(-d2 / (2.0 * width * width))
        return err

    def evaluate(self, poses: list[list[float]]) -> tuple[list[float], list[float]]:
        err3d = [self.err3d_single(pose) for pose in poses]
        return [self.err2d_ratio * e for e in err3d], err3d

    def train(self, samples: list[list[float]], lr_discount: float) -> bool:
        """Damp bumps that overlap the sample batch (once per call)."""
        del lr_discount
        if not self.trainable:
            return False
        if not samples:
            return True
        for k, (center, width) in enumerate(zip(self.centers, self.widths)):
            dmin = min(
                math.sqrt(sum((p - c) ** 2 for p, c in zip(pose, center)))
                for pose in samples
            )
            if dmin <= TRAIN_OVERLAP_WIDTHS * width:
                self.amplitudes[k] *= self.damping
        return True


def load_landscape(path: str) -> MirrorLandscape:
    with open(path, encoding="utf-8") as fh:
        return MirrorLandscape.from_json_dict(json.load(fh))
