"""Ready-made kinematic trees: the planar toy ladder and a 17-joint human body."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .kinematics import (
    ANGLE,
    ORIENTATION,
    PLANAR,
    POSITION,
    SPATIAL_AXES,
    JointNode,
    KinematicTree,
    ParamSlot,
    Rotation,
)
from .treespec import TreeSpecError, build_tree, load_tree

TOY_BONE_LENGTH = 45.0
TOY_LEVELS = (0, 1, 2, 3)

# Subject scale used when the subject is unknown (e.g. at test time).
DEFAULT_SUBJECT_SCALE = 1.0

# Adult proportions in millimetres, keyed by the joint that ends the bone.
# The torso bone is derived (half the neck bone) and cannot be overridden.
DEFAULT_HUMAN_BONES = {
    "neck": 490.0,
    "nose": 121.0,
    "head": 115.0,
    "l_shoulder": 151.0,
    "l_elbow": 279.0,
    "l_wrist": 252.0,
    "r_shoulder": 151.0,
    "r_elbow": 279.0,
    "r_wrist": 252.0,
    "l_hip": 133.0,
    "l_knee": 443.0,
    "l_ankle": 454.0,
    "r_hip": 133.0,
    "r_knee": 443.0,
    "r_ankle": 454.0,
}


def _rot(axis, param, sign=1.0):
    return {"axis": axis, "param": param, "sign": sign}


def toy_doc(level: int) -> dict:
    """Tree document for the planar toy object at complexity ``level``.

    Level 0 is a root with two 45 px bones opened symmetrically by one angle
    (``+theta`` and ``-theta`` from the vertical), giving (x, y, theta).  Each
    further level adds a global orientation (from level 1 on) and one more
    bone with its own angle at the end of both arms: 3, 6, 8, 10 parameters.
    """
    if level not in TOY_LEVELS:
        raise ValueError(f"unsupported toy level {level}; choose one of {TOY_LEVELS}")
    params = [
        {"name": "x", "kind": POSITION, "component": 0},
        {"name": "y", "kind": POSITION, "component": 1},
    ]
    root_rot = []
    if level >= 1:
        params.append({"name": "orientation", "kind": "rotation"})
        root_rot.append(_rot(PLANAR, "orientation"))
    params.append({"name": "theta", "kind": "rotation"})
    down = [0.0, 1.0]
    joints = [
        {"name": "root", "parent": None, "rotations": root_rot},
        {"name": "a0", "parent": "root", "direction": down, "rotations": [_rot(PLANAR, "theta", 1.0)]},
        {"name": "b0", "parent": "root", "direction": down, "rotations": [_rot(PLANAR, "theta", -1.0)]},
    ]
    for k in range(1, level + 1):
        for arm in "ab":
            name = f"{arm}{k}"
            params.append({"name": f"angle_{name}", "kind": "rotation"})
            joints.append(
                {
                    "name": name,
                    "parent": f"{arm}{k - 1}",
                    "direction": down,
                    "rotations": [_rot(PLANAR, f"angle_{name}")],
                }
            )
    return {
        "name": f"toy-{level}",
        "dimension": 2,
        "params": params,
        "joints": joints,
        "bone_lengths": {j["name"]: TOY_BONE_LENGTH for j in joints[1:]},
    }


def toy_model(level: int) -> KinematicTree:
    return build_tree(toy_doc(level))


def human_doc(bone_lengths: Mapping[str, float] | None = None) -> dict:
    """Tree document for the 17-joint, 27-parameter human body.

    Frame: X toward the subject's left, Y up, Z forward; millimetres.  In the
    rest pose the spine points up, arms and legs hang down.

    Rotations sit on the joint whose incoming bone they swing, so the three
    shoulder angles live on the elbow node (the last one, about Y, rolls the
    upper arm about itself) and the elbow angle on the wrist node; hips and
    knees likewise.  The neck node carries two angles about X and Z relative
    to the pelvis, the nose node the three head angles.  The torso is a
    fixed child of the neck pointing back down the spine at half its length,
    i.e. the neck-pelvis midpoint.
    """
    lengths = dict(DEFAULT_HUMAN_BONES)
    for name, value in (bone_lengths or {}).items():
        if name == "torso":
            raise TreeSpecError("the torso bone is derived from the neck bone and cannot be set")
        if name not in lengths:
            raise TreeSpecError(f"unknown human bone {name!r}")
        lengths[name] = float(value)
    lengths["torso"] = 0.5 * lengths["neck"]

    params = [{"name": n, "kind": POSITION, "component": c} for c, n in enumerate(("x", "y", "z"))]
    rotation_params = []

    def rots(prefix, axes):
        out = []
        for ax in axes:
            name = f"{prefix}_{ax.lower()}"
            rotation_params.append(name)
            out.append(_rot(ax, name))
        return out

    nose_dir = [0.0, 0.8, 0.6]
    joints = [
        {"name": "pelvis", "parent": None, "rotations": rots("pelvis", "XYZ")},
        {"name": "neck", "parent": "pelvis", "direction": [0.0, 1.0, 0.0], "rotations": rots("neck", "XZ")},
        {"name": "torso", "parent": "neck", "direction": [0.0, -1.0, 0.0], "rotations": []},
        {"name": "nose", "parent": "neck", "direction": nose_dir, "rotations": rots("head", "XYZ")},
        {"name": "head", "parent": "nose", "direction": [0.0, 1.0, 0.0], "rotations": []},
    ]
    for side, sx in (("l", 1.0), ("r", -1.0)):
        joints += [
            {"name": f"{side}_shoulder", "parent": "neck", "direction": [sx, 0.0, 0.0], "rotations": []},
            {
                "name": f"{side}_elbow",
                "parent": f"{side}_shoulder",
                "direction": [0.0, -1.0, 0.0],
                "rotations": rots(f"{side}_shoulder", "ZXY"),
            },
            {
                "name": f"{side}_wrist",
                "parent": f"{side}_elbow",
                "direction": [0.0, -1.0, 0.0],
                "rotations": rots(f"{side}_elbow", "X"),
            },
        ]
    for side, sx in (("l", 1.0), ("r", -1.0)):
        joints += [
            {"name": f"{side}_hip", "parent": "pelvis", "direction": [sx, 0.0, 0.0], "rotations": []},
            {
                "name": f"{side}_knee",
                "parent": f"{side}_hip",
                "direction": [0.0, -1.0, 0.0],
                "rotations": rots(f"{side}_hip", "ZXY"),
            },
            {
                "name": f"{side}_ankle",
                "parent": f"{side}_knee",
                "direction": [0.0, -1.0, 0.0],
                "rotations": rots(f"{side}_knee", "X"),
            },
        ]
    params += [{"name": n, "kind": "rotation"} for n in rotation_params]
    return {
        "name": "human",
        "dimension": 3,
        "params": params,
        "joints": joints,
        "bone_lengths": {j["name"]: lengths[j["name"]] for j in joints[1:]},
    }


def human_model(bone_lengths: Mapping[str, float] | None = None) -> KinematicTree:
    return build_tree(human_doc(bone_lengths))


def straight_arm_pose(tree: KinematicTree, seed: int = 0, side: str = "l", spread: float = 0.6) -> np.ndarray:
    """Random human parameters with the ``side`` elbow fully extended.

    With the elbow straight the wrist lies on the upper-arm axis, so the
    shoulder roll no longer changes any joint position.
    """
    rng = np.random.default_rng(seed)
    theta = np.zeros(tree.n_params)
    theta[tree.angle_slots] = rng.uniform(-spread, spread, len(tree.angle_slots))
    theta[list(tree.position_slots)] = rng.uniform(-500.0, 500.0, tree.dimension)
    theta[tree.param_index(f"{side}_elbow_x")] = 0.0
    return theta


def compute_subject_scale(subject_bone_sum: float, average_bone_sum: float) -> float:
    """Global bone-length multiplier of one subject relative to the average body."""
    if not subject_bone_sum > 0 or not average_bone_sum > 0:
        raise ValueError("bone length sums must be positive")
    return subject_bone_sum / average_bone_sum


def random_tree(rng: np.random.Generator, dimension: int, n_joints: int, max_rotations: int | None = None):
    """Random valid tree with a positioned, oriented root (for property tests)."""
    axes = (PLANAR,) if dimension == 2 else SPATIAL_AXES
    if max_rotations is None:
        max_rotations = 1 if dimension == 2 else 3
    params = [ParamSlot(f"p{c}", POSITION, 0, c) for c in range(dimension)]
    joints = []
    lengths = np.zeros(n_joints)
    for u in range(n_joints):
        m = int(rng.integers(1 if u == 0 else 0, max_rotations + 1))
        rotations = []
        for a in range(m):
            axis = axes[int(rng.integers(len(axes)))]
            params.append(ParamSlot(f"r{u}_{a}", ORIENTATION if u == 0 else ANGLE, u, a))
            rotations.append(Rotation(axis, len(params) - 1, 1.0))
        if u == 0:
            joints.append(JointNode("j0", None, tuple(rotations), None))
            continue
        d = rng.normal(size=dimension)
        d /= np.linalg.norm(d)
        joints.append(JointNode(f"j{u}", int(rng.integers(u)), tuple(rotations), tuple(d)))
        lengths[u] = rng.uniform(0.5, 2.0)
    return KinematicTree(f"random-{dimension}d-{n_joints}", dimension, tuple(joints), lengths, tuple(params))


BUILTIN_TREES = ("toy-0", "toy-1", "toy-2", "toy-3", "human")


def builtin_tree(name: str) -> KinematicTree:
    if name == "human":
        return human_model()
    if name.startswith("toy-") and name[4:].isdigit():
        return toy_model(int(name[4:]))
    raise ValueError(f"unknown builtin tree {name!r}; choose one of {BUILTIN_TREES}")


def resolve_tree(name_or_path: str) -> KinematicTree:
    """Builtin tree by name, otherwise a tree document on disk."""
    if name_or_path in BUILTIN_TREES:
        return builtin_tree(name_or_path)
    return load_tree(name_or_path)
