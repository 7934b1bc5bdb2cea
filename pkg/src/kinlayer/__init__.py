"""Differentiable forward kinematics for articulated trees.

Build a tree (``models`` or a JSON document via ``treespec``), map motion
parameters to joints with ``forward_kinematics``, differentiate with
``analytic_jacobian``, fit parameters to joints with ``fit_model`` and train
image regressors through the kinematic layer with ``learner.train``.
"""
from .fitting import FitOptions, FitResult, batch_fit, fit_model
from .jacobian import analytic_jacobian, finite_difference_jacobian, joint_loss, joint_loss_and_grad
from .kinematics import KinematicTree, TreeError, forward_kinematics, global_transforms
from .models import human_model, toy_model
from .treespec import build_tree, load_tree, save_tree

__all__ = [
    "FitOptions",
    "FitResult",
    "KinematicTree",
    "TreeError",
    "analytic_jacobian",
    "batch_fit",
    "build_tree",
    "finite_difference_jacobian",
    "fit_model",
    "forward_kinematics",
    "global_transforms",
    "human_model",
    "joint_loss",
    "joint_loss_and_grad",
    "load_tree",
    "save_tree",
    "toy_model",
]
