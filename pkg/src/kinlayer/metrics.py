"""Evaluation metrics shared by every training regime."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import KinematicTree


def _pair(preds, gts):
    preds = np.asarray(preds, dtype=float)
    gts = np.asarray(gts, dtype=float)
    if preds.shape != gts.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {gts.shape}")
    return preds, gts


def mean_joint_error(preds, gts, root_index: int | None = None) -> float:
    """Mean Euclidean distance over samples and joints.

    With ``root_index`` both sets are first expressed as offsets from that
    joint (used for 3D evaluation, where global placement is not scored).
    """
    preds, gts = _pair(preds, gts)
    if preds.ndim < 2:
        raise ValueError("joint sets need shape (..., J, D)")
    if root_index is not None:
        preds = preds - preds[..., root_index : root_index + 1, :]
        gts = gts - gts[..., root_index : root_index + 1, :]
    return float(np.mean(np.linalg.norm(preds - gts, axis=-1)))


def wrapped_angle_difference(a, b) -> np.ndarray:
    """|a - b| folded into [0, pi]."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % (2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def mean_angle_error(pred_params, gt_params, tree: KinematicTree) -> float:
    """Mean wrapped absolute difference over the rotational slots (radians)."""
    pred_params, gt_params = _pair(pred_params, gt_params)
    if pred_params.shape[-1] != tree.n_params:
        raise ValueError(f"expected {tree.n_params} parameters, got {pred_params.shape[-1]}")
    slots = tree.angle_slots
    return float(np.mean(wrapped_angle_difference(pred_params[..., slots], gt_params[..., slots])))


def bone_lengths_observed(joints, tree: KinematicTree) -> np.ndarray:
    """Parent-child distances, shape (..., n_bones) in ``tree.bones()`` order."""
    joints = np.asarray(joints, dtype=float)
    parent, child = np.array(tree.bones()).T
    return np.linalg.norm(joints[..., child, :] - joints[..., parent, :], axis=-1)


def bone_length_stats(preds, tree: KinematicTree) -> tuple[np.ndarray, np.ndarray]:
    """Per-bone mean and population standard deviation across samples."""
    preds = np.asarray(preds, dtype=float)
    if preds.size == 0:
        raise ValueError("bone_length_stats needs at least one sample")
    lengths = bone_lengths_observed(preds.reshape((-1, tree.n_joints, tree.dimension)), tree)
    return lengths.mean(axis=0), lengths.std(axis=0)


@dataclass
class MetricReport:
    """Summary of one prediction set; lengths in ``units``, angles in radians."""

    mean_joint_error: float
    mean_angle_error: float
    bone_names: list[str]
    bone_length_mean: np.ndarray
    bone_length_std: np.ndarray
    count: int
    units: str = "px"

    @classmethod
    def compute(cls, tree, pred_joints, gt_joints, pred_params, gt_params, units="px", root_index=None):
        mean, std = bone_length_stats(pred_joints, tree)
        return cls(
            mean_joint_error=mean_joint_error(pred_joints, gt_joints, root_index),
            mean_angle_error=mean_angle_error(pred_params, gt_params, tree),
            bone_names=[f"{tree.joint_names[p]}-{tree.joint_names[c]}" for p, c in tree.bones()],
            bone_length_mean=mean,
            bone_length_std=std,
            count=len(pred_joints),
            units=units,
        )

    def rows(self):
        """(metric, value) pairs, bone statistics last."""
        yield ["count", self.count]
        yield [f"mean_joint_error_{self.units}", self.mean_joint_error]
        yield ["mean_angle_error_rad", self.mean_angle_error]
        for name, m, s in zip(self.bone_names, self.bone_length_mean, self.bone_length_std):
            yield [f"bone_mean_{self.units}:{name}", m]
            yield [f"bone_std_{self.units}:{name}", s]
