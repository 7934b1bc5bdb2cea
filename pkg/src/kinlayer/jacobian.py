"""Analytic derivatives of forward kinematics and of the joint loss."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .kinematics import (
    KinematicTree,
    _check_params,
    axis_rotation,
    forward_kinematics,
    global_transforms,
    node_angles,
    translation,
)


class LossReport(NamedTuple):
    loss: np.ndarray
    grad: np.ndarray


def _rigid_inverse(T: np.ndarray) -> np.ndarray:
    D = T.shape[-1] - 1
    R = T[..., :D, :D]
    t = T[..., :D, D]
    out = np.zeros_like(T)
    Rt = np.swapaxes(R, -1, -2)
    out[..., :D, :D] = Rt
    out[..., :D, D] = -np.einsum("...ij,...j->...i", Rt, t)
    out[..., D, D] = 1.0
    return out


def analytic_jacobian(tree: KinematicTree, params) -> np.ndarray:
    """d(joints)/d(params), shape (..., D*J, n_params), rows joint-major.

    Each rotation factor is swapped for its derivative matrix while every
    other factor of the chain is kept.  The prefix (everything up to the
    factor) comes from the cached forward pass and the suffix is recovered
    as ``inv(prefix @ R) @ p_u``, so only the factor's subtree is touched.
    """
    params = _check_params(tree, params)
    D = tree.dimension
    J = tree.n_joints
    batch = params.shape[:-1]
    params = params.reshape(-1, tree.n_params)
    B = len(params)
    T = global_transforms(tree, params)
    pos_h = T[:, :, :, D]
    jac = np.zeros((B, J, D, tree.n_params))

    for c, k in enumerate(tree.position_slots):
        if k >= 0:
            jac[:, :, c, k] = 1.0

    for v, node in enumerate(tree.joints):
        if not node.rotations:
            continue
        if node.parent is None:
            p = np.zeros((B, D))
            for c, k in enumerate(tree.position_slots):
                if k >= 0:
                    p[:, c] = params[:, k]
            prefix = translation(p)
        else:
            prefix = T[:, node.parent]
        angles = node_angles(tree, params, v)
        sub = tree.subtree(v)
        for a, rot in enumerate(node.rotations):
            R = axis_rotation(rot.axis, angles[:, a])
            dR = rot.sign * axis_rotation(rot.axis, angles[:, a], derivative=True)
            nxt = prefix @ R
            M = prefix @ dR @ _rigid_inverse(nxt)
            dp = np.einsum("bij,bkj->bki", M, pos_h[:, sub])[..., :D]
            col = jac[..., rot.slot]
            col[:, sub] += dp
            prefix = nxt
    return jac.reshape(batch + (J * D, tree.n_params))


def finite_difference_jacobian(tree: KinematicTree, params, eps: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian, same layout as ``analytic_jacobian``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    params = _check_params(tree, params)
    n = tree.n_params
    cols = []
    for k in range(n):
        step = np.zeros(n)
        step[k] = eps
        hi = forward_kinematics(tree, params + step)
        lo = forward_kinematics(tree, params - step)
        cols.append(((hi - lo) / (2 * eps)).reshape(params.shape[:-1] + (-1,)))
    return np.stack(cols, axis=-1)


def joint_loss(tree: KinematicTree, params, target) -> np.ndarray:
    """0.5 * ||FK(params) - target||^2 (per batch element)."""
    resid = forward_kinematics(tree, params) - _check_target(tree, target)
    return 0.5 * np.sum(resid**2, axis=(-2, -1))


def joint_loss_and_grad(tree: KinematicTree, params, target) -> LossReport:
    """Joint loss and its gradient ``jac.T @ (FK(params) - target)``."""
    target = _check_target(tree, target)
    params = _check_params(tree, params)
    resid = forward_kinematics(tree, params) - target
    loss = 0.5 * np.sum(resid**2, axis=(-2, -1))
    jac = analytic_jacobian(tree, params)
    flat = resid.reshape(resid.shape[:-2] + (-1,))
    grad = np.einsum("...rk,...r->...k", jac, flat)
    return LossReport(loss, grad)


def kinematic_backward(tree: KinematicTree, params, grad_joints) -> np.ndarray:
    """Pull a joint-space gradient back to parameter space (vector-Jacobian product)."""
    jac = analytic_jacobian(tree, params)
    g = np.asarray(grad_joints, dtype=float)
    return np.einsum("...rk,...r->...k", jac, g.reshape(g.shape[:-2] + (-1,)))


def _check_target(tree: KinematicTree, target) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    if target.shape[-2:] != (tree.n_joints, tree.dimension):
        raise ValueError(
            f"{tree.name}: target must have shape (..., {tree.n_joints}, {tree.dimension}), got {target.shape}"
        )
    return target
