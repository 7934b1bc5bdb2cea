"""Kinematic trees and forward kinematics by chained homogeneous transforms.

Conventions
-----------
Every non-root joint ``u`` carries the rotations that orient its *incoming*
bone, followed by the bone translation::

    T_u = T_parent(u) @ R_1 @ ... @ R_m @ Trans(l_u * d_u)

and the joint position is ``T_u @ O`` with ``O`` the homogeneous origin.  The
root transform is ``Trans(p) @ R_1 @ ... @ R_m`` where ``p`` is the global
position and the ``R_k`` are the global orientation rotations.

Planar trees use image coordinates (x right, y down).  The single planar
rotation turns the downward +y axis toward +x, so an angle is measured from
the vertical and a bone along ``(0, 1)`` rotated by ``theta`` points along
``(sin(theta), cos(theta))``.  Spatial trees use right-handed rotations about
the X, Y and Z axes, composed intrinsically in declared order.

All routines accept parameter arrays with arbitrary leading batch dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

PLANAR = "planar"
SPATIAL_AXES = ("X", "Y", "Z")

POSITION = "position"
ORIENTATION = "orientation"
ANGLE = "angle"


class Rotation(NamedTuple):
    """One rotation factor of a joint, driven by parameter ``slot``."""

    axis: str
    slot: int
    sign: float = 1.0


@dataclass(frozen=True)
class JointNode:
    name: str
    parent: int | None
    rotations: tuple[Rotation, ...] = ()
    translation_direction: tuple[float, ...] | None = None

    @property
    def rotation_axes(self) -> tuple[str, ...]:
        return tuple(r.axis for r in self.rotations)


@dataclass(frozen=True)
class ParamSlot:
    """Where one entry of the motion parameter vector acts.

    ``kind`` is ``position`` (``component`` is the coordinate index),
    ``orientation`` (a root rotation) or ``angle`` (a non-root rotation).  For
    rotations ``joint`` and ``component`` name the first rotation factor that
    reads the slot; coupled factors elsewhere in the tree may read it too.
    """

    name: str
    kind: str
    joint: int
    component: int


class TreeError(ValueError):
    """Structural problem with a kinematic tree, tagged with the joint index."""

    def __init__(self, message: str, joint: int | None = None):
        self.joint = joint
        self.detail = message
        if joint is not None:
            message = f"joint {joint}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class KinematicTree:
    """Immutable articulated structure.

    Attributes
    ----------
    name : str
        Free-form identifier.
    dimension : int
        2 for planar trees, 3 for spatial ones.
    joints : tuple of JointNode
        Topologically ordered; joint 0 is the root.
    bone_lengths : ndarray, shape (J,)
        Length of the incoming bone of every joint.  The root entry is 0.
    params : tuple of ParamSlot
        Layout of the motion parameter vector.
    """

    name: str
    dimension: int
    joints: tuple[JointNode, ...]
    bone_lengths: np.ndarray
    params: tuple[ParamSlot, ...]
    root_index: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lengths = np.array(self.bone_lengths, dtype=float)
        lengths.setflags(write=False)
        object.__setattr__(self, "bone_lengths", lengths)
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "params", tuple(self.params))
        validate_tree(self)

    def __eq__(self, other):
        if not isinstance(other, KinematicTree):
            return NotImplemented
        return (
            self.name == other.name
            and self.dimension == other.dimension
            and self.joints == other.joints
            and self.params == other.params
            and np.array_equal(self.bone_lengths, other.bone_lengths)
        )

    __hash__ = None

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def parents(self) -> np.ndarray:
        return np.array([-1 if j.parent is None else j.parent for j in self.joints])

    @property
    def position_slots(self) -> np.ndarray:
        """Slot index of each global position coordinate (-1 if absent)."""
        out = -np.ones(self.dimension, dtype=int)
        for k, p in enumerate(self.params):
            if p.kind == POSITION:
                out[p.component] = k
        return out

    @property
    def angle_slots(self) -> np.ndarray:
        """Indices of all rotational slots (global orientation and joint angles)."""
        return np.array([k for k, p in enumerate(self.params) if p.kind != POSITION], dtype=int)

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)

    def param_index(self, name: str) -> int:
        return self.param_names.index(name)

    def bones(self) -> list[tuple[int, int]]:
        """(parent, child) pairs, one per non-root joint."""
        return [(j.parent, u) for u, j in enumerate(self.joints) if j.parent is not None]

    def subtree(self, v: int) -> np.ndarray:
        """Indices of ``v`` and all of its descendants."""
        key = ("subtree", v)
        if key not in self._cache:
            inside = np.zeros(self.n_joints, dtype=bool)
            inside[v] = True
            for u in range(v + 1, self.n_joints):
                p = self.joints[u].parent
                if p is not None and inside[p]:
                    inside[u] = True
            self._cache[key] = np.flatnonzero(inside)
        return self._cache[key]

    def path_to_root(self, u: int) -> list[int]:
        """Joint indices from the root down to ``u`` inclusive."""
        path = [u]
        while self.joints[path[-1]].parent is not None:
            path.append(self.joints[path[-1]].parent)
        return path[::-1]


def validate_tree(tree: KinematicTree) -> None:
    """Raise ``TreeError`` unless every structural invariant holds."""
    if tree.dimension not in (2, 3):
        raise TreeError(f"dimension must be 2 or 3, got {tree.dimension}")
    J = len(tree.joints)
    if J == 0:
        raise TreeError("tree has no joints")
    if tree.root_index != 0:
        raise TreeError("root must be the first joint", tree.root_index)
    if tree.bone_lengths.shape != (J,):
        raise TreeError(f"expected {J} bone lengths, got shape {tree.bone_lengths.shape}")

    allowed_axes = (PLANAR,) if tree.dimension == 2 else SPATIAL_AXES
    n = len(tree.params)
    readers: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for u, node in enumerate(tree.joints):
        if u == 0:
            if node.parent is not None:
                raise TreeError("root has a parent", u)
            if tree.bone_lengths[0] != 0.0:
                raise TreeError("root has no incoming bone; its length must be 0", u)
        else:
            if node.parent is None:
                raise TreeError("joint is unreachable from the root (no parent)", u)
            if not 0 <= node.parent < u:
                raise TreeError(f"parent {node.parent} does not precede joint (topological order)", u)
            if not np.isfinite(tree.bone_lengths[u]) or tree.bone_lengths[u] <= 0:
                raise TreeError(f"bone length must be positive, got {tree.bone_lengths[u]}", u)
            d = np.asarray(node.translation_direction, dtype=float)
            if d.shape != (tree.dimension,):
                raise TreeError(f"translation direction must have {tree.dimension} components", u)
            if abs(np.linalg.norm(d) - 1.0) > 1e-12:
                raise TreeError("translation direction is not a unit vector", u)
        for a, rot in enumerate(node.rotations):
            if rot.axis not in allowed_axes:
                raise TreeError(f"axis {rot.axis!r} not allowed in {tree.dimension}D", u)
            if not 0 <= rot.slot < n:
                raise TreeError(f"rotation reads missing parameter slot {rot.slot}", u)
            readers[rot.slot].append((u, a))

    seen_pos = set()
    for k, slot in enumerate(tree.params):
        if slot.kind == POSITION:
            if readers[k]:
                raise TreeError(f"position slot {slot.name!r} is also read by a rotation", readers[k][0][0])
            if not 0 <= slot.component < tree.dimension or slot.component in seen_pos:
                raise TreeError(f"duplicate or invalid position component for slot {slot.name!r}", 0)
            seen_pos.add(slot.component)
        elif slot.kind in (ORIENTATION, ANGLE):
            if not readers[k]:
                raise TreeError(f"parameter slot {slot.name!r} is not used by any rotation")
            if (slot.joint, slot.component) != readers[k][0]:
                raise TreeError(f"slot {slot.name!r} layout does not match its first reader", slot.joint)
            at_root = {u == 0 for u, _ in readers[k]}
            if at_root != {slot.kind == ORIENTATION}:
                raise TreeError(f"slot {slot.name!r} mixes root and non-root rotations", slot.joint)
        else:
            raise TreeError(f"unknown slot kind {slot.kind!r}")
    names = [p.name for p in tree.params]
    if len(set(names)) != len(names):
        dup = next(nm for nm in names if names.count(nm) > 1)
        raise TreeError(f"duplicate parameter slot {dup!r}")


def _homogeneous(dim: int, batch: tuple = ()) -> np.ndarray:
    return np.broadcast_to(np.eye(dim + 1), batch + (dim + 1, dim + 1)).copy()


def axis_rotation(axis: str, angle, derivative: bool = False) -> np.ndarray:
    """Homogeneous rotation (or its derivative w.r.t. the angle).

    ``angle`` may be an array; the result has shape ``angle.shape + (h, h)``
    with ``h`` = 3 for the planar axis and 4 for X/Y/Z.
    """
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    if derivative:
        c, s = -s, c
    if axis == PLANAR:
        out = np.zeros(angle.shape + (3, 3))
        out[..., 0, 0] = c
        out[..., 0, 1] = s
        out[..., 1, 0] = -s
        out[..., 1, 1] = c
        if not derivative:
            out[..., 2, 2] = 1.0
        return out
    if axis not in SPATIAL_AXES:
        raise ValueError(f"unknown rotation axis {axis!r}")
    i, j = {"X": (1, 2), "Y": (2, 0), "Z": (0, 1)}[axis]
    out = np.zeros(angle.shape + (4, 4))
    out[..., i, i] = c
    out[..., i, j] = -s
    out[..., j, i] = s
    out[..., j, j] = c
    if not derivative:
        k = 3 - i - j
        out[..., k, k] = 1.0
        out[..., 3, 3] = 1.0
    return out


def translation(offset) -> np.ndarray:
    """Homogeneous translation by ``offset`` (shape (..., D))."""
    offset = np.asarray(offset, dtype=float)
    D = offset.shape[-1]
    out = _homogeneous(D, offset.shape[:-1])
    out[..., :D, D] = offset
    return out


def local_transform(node: JointNode, angles, bone_length: float, dim: int | None = None) -> np.ndarray:
    """Rotations of ``node`` in declared order followed by its bone translation.

    ``angles`` holds one (already signed) value per rotation of the node, with
    optional leading batch dimensions.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape[-1:] != (len(node.rotations),):
        raise ValueError(f"{node.name}: expected {len(node.rotations)} angles, got {angles.shape[-1:]}")
    if dim is None:
        if node.translation_direction is not None:
            dim = len(node.translation_direction)
        elif node.rotations:
            dim = 2 if node.rotations[0].axis == PLANAR else 3
        else:
            raise ValueError("cannot infer dimension of a bare root node")
    T = _homogeneous(dim, angles.shape[:-1])
    for a, rot in enumerate(node.rotations):
        T = T @ axis_rotation(rot.axis, angles[..., a])
    if node.translation_direction is not None and bone_length != 0.0:
        T = T @ translation(bone_length * np.asarray(node.translation_direction, dtype=float))
    return T


def _check_params(tree: KinematicTree, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.ndim == 0 or params.shape[-1] != tree.n_params:
        raise ValueError(f"{tree.name}: expected {tree.n_params} motion parameters, got shape {params.shape}")
    return params


def node_angles(tree: KinematicTree, params: np.ndarray, u: int) -> np.ndarray:
    """Signed angles feeding joint ``u``'s rotations, shape (..., m)."""
    rots = tree.joints[u].rotations
    if not rots:
        return params[..., :0]
    slots = [r.slot for r in rots]
    signs = np.array([r.sign for r in rots])
    return params[..., slots] * signs


def root_transform(tree: KinematicTree, params: np.ndarray) -> np.ndarray:
    D = tree.dimension
    p = np.zeros(params.shape[:-1] + (D,))
    for c, k in enumerate(tree.position_slots):
        if k >= 0:
            p[..., c] = params[..., k]
    return translation(p) @ local_transform(tree.joints[0], node_angles(tree, params, 0), 0.0, D)


def global_transforms(tree: KinematicTree, params) -> np.ndarray:
    """World transform of every joint, shape (..., J, D+1, D+1).

    Single pass in topological order; each joint reuses its parent's cached
    transform, so the cost is O(J) matrix products.
    """
    params = _check_params(tree, params)
    D = tree.dimension
    out = np.empty(params.shape[:-1] + (tree.n_joints, D + 1, D + 1))
    out[..., 0, :, :] = root_transform(tree, params)
    for u in range(1, tree.n_joints):
        node = tree.joints[u]
        local = local_transform(node, node_angles(tree, params, u), tree.bone_lengths[u], D)
        out[..., u, :, :] = out[..., node.parent, :, :] @ local
    return out


def forward_kinematics(tree: KinematicTree, params) -> np.ndarray:
    """Joint coordinates for motion parameters ``params``.

    Parameters
    ----------
    tree : KinematicTree
    params : array_like, shape (..., n_params)

    Returns
    -------
    ndarray, shape (..., J, D)
    """
    T = global_transforms(tree, params)
    D = tree.dimension
    return T[..., :D, D].copy()


def apply_scale(tree: KinematicTree, s: float) -> KinematicTree:
    """Same tree with every bone length multiplied by ``s``."""
    if not np.isfinite(s) or s <= 0:
        raise ValueError(f"scale must be positive, got {s}")
    return replace(tree, bone_lengths=tree.bone_lengths * s, _cache={})


def bone_lengths_of(tree: KinematicTree, joints) -> np.ndarray:
    """Observed parent-child distances, shape (..., J-1) in joint order."""
    joints = np.asarray(joints, dtype=float)
    pairs = tree.bones()
    parent = [p for p, _ in pairs]
    child = [c for _, c in pairs]
    return np.linalg.norm(joints[..., child, :] - joints[..., parent, :], axis=-1)


def zero_params(tree: KinematicTree, batch: Sequence[int] = ()) -> np.ndarray:
    return np.zeros(tuple(batch) + (tree.n_params,))
