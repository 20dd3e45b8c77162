"""Turn a joint-position predictor into a protocol-ready error callback."""

from __future__ import annotations

import math
from typing import Callable, Sequence

Joints = Sequence[Sequence[float]]  # (J, 3) per-joint positions, millimeters


def _mean_joint_distance(pred: Joints, truth: Joints, coords: int) -> float:
    if len(pred) != len(truth):
        raise ValueError(f"joint count mismatch: prediction {len(pred)} vs truth {len(truth)}")
    total = 0.0
    for p, t in zip(pred, truth):
        total += math.dist(p[:coords], t[:coords])
    return total / len(pred)


def wrap_model_stub(
    predict: Callable[[Sequence[float]], Joints],
    ground_truth: Callable[[Sequence[float]], Joints],
) -> Callable[[list[list[float]]], tuple[list[float], list[float]]]:
    """Model callback computing MPJPE in mm.

    ``err3d`` is the mean per-joint Euclidean distance between prediction and
    ground truth; ``err2d`` is the same over the first two coordinates.
    """

    def callback(poses: list[list[float]]) -> tuple[list[float], list[float]]:
        err2d, err3d = [], []
        for pose in poses:
            pred, truth = predict(pose), ground_truth(pose)
            err3d.append(_mean_joint_distance(pred, truth, 3))
            err2d.append(_mean_joint_distance(pred, truth, 2))
        return err2d, err3d

    return callback
