"""Reading and writing kinematic trees as JSON documents.

Document layout (``format`` is ``"kinlayer-tree/1"``)::

    {
      "format": "kinlayer-tree/1",
      "name": "toy-0",
      "dimension": 2,
      "params": [
        {"name": "x", "kind": "position", "component": 0},
        {"name": "y", "kind": "position", "component": 1},
        {"name": "theta", "kind": "rotation"}
      ],
      "joints": [
        {"name": "root", "parent": null, "rotations": []},
        {"name": "arm_a", "parent": "root", "direction": [0.0, 1.0],
         "rotations": [{"axis": "planar", "param": "theta", "sign": 1.0}]},
        ...
      ],
      "bone_lengths": {"arm_a": 45.0, ...}
    }

``params`` fixes the order of the motion parameter vector.  Rotation axes are
``"planar"`` in 2D and ``"X"``, ``"Y"``, ``"Z"`` in 3D.  A rotation parameter
may be read by several rotations (``sign`` lets a coupled bone mirror it), but
never by both the root and a non-root joint.  ``bone_lengths`` has one entry
per non-root joint; a document holding only that section is a bone-length
override file (see ``load_bone_lengths``).

Floats are written with ``repr`` precision, so documents round-trip exactly.
"""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .kinematics import (
    ANGLE,
    ORIENTATION,
    POSITION,
    JointNode,
    KinematicTree,
    ParamSlot,
    Rotation,
    TreeError,
)

FORMAT = "kinlayer-tree/1"


class TreeSpecError(TreeError):
    pass


def _resolve_parents(joints: list[dict]) -> list[int | None]:
    names = [j["name"] for j in joints]
    for i, nm in enumerate(names):
        if names.index(nm) != i:
            raise TreeSpecError(f"duplicate joint name {nm!r}", i)
    index = {nm: i for i, nm in enumerate(names)}
    parents: list[int | None] = []
    for i, j in enumerate(joints):
        p = j.get("parent")
        if p is None:
            parents.append(None)
        elif p not in index:
            raise TreeSpecError(f"unknown parent {p!r}", i)
        else:
            parents.append(index[p])

    for i in range(len(joints)):
        seen = {i}
        p = parents[i]
        while p is not None:
            if p in seen:
                raise TreeSpecError("cycle detected in parent links", i)
            seen.add(p)
            p = parents[p]
    roots = [i for i, p in enumerate(parents) if p is None]
    if not roots or roots[0] != 0:
        raise TreeSpecError("the first joint must be the root", 0)
    for i in roots[1:]:
        raise TreeSpecError("joint is unreachable from the root (second root)", i)
    for i, p in enumerate(parents):
        if p is not None and p > i:
            raise TreeSpecError(f"parent {p} comes after its child; joints must be topologically ordered", i)
    return parents


def build_tree(doc: Mapping) -> KinematicTree:
    """Validate a tree document and build the corresponding tree.

    Raises ``TreeSpecError`` (a ``ValueError``) carrying the offending joint
    index for cycles, ordering violations, unreachable joints, duplicate
    parameter slots and nonpositive bone lengths.
    """
    dim = int(doc["dimension"])
    joints_doc = list(doc["joints"])
    if not joints_doc:
        raise TreeSpecError("tree has no joints")
    parents = _resolve_parents(joints_doc)

    params_doc = list(doc.get("params", []))
    slot_of: dict[str, int] = {}
    for k, p in enumerate(params_doc):
        if p["name"] in slot_of:
            raise TreeSpecError(f"duplicate parameter slot {p['name']!r}")
        if p.get("kind", "rotation") not in (POSITION, "rotation"):
            raise TreeSpecError(f"unknown parameter kind {p.get('kind')!r}")
        slot_of[p["name"]] = k

    first_reader: dict[int, tuple[int, int]] = {}
    nodes = []
    for u, j in enumerate(joints_doc):
        rotations = []
        used_here = set()
        for a, r in enumerate(j.get("rotations", [])):
            name = r["param"]
            if name not in slot_of:
                raise TreeSpecError(f"rotation reads undeclared parameter {name!r}", u)
            k = slot_of[name]
            if params_doc[k].get("kind", "rotation") == POSITION:
                raise TreeSpecError(f"rotation reads position parameter {name!r}", u)
            if k in used_here:
                raise TreeSpecError(f"duplicate parameter slot {name!r} within one joint", u)
            used_here.add(k)
            first_reader.setdefault(k, (u, a))
            rotations.append(Rotation(str(r["axis"]), k, float(r.get("sign", 1.0))))
        direction = j.get("direction")
        if u == 0:
            direction = None
        elif direction is None:
            raise TreeSpecError("non-root joint needs a translation direction", u)
        else:
            direction = tuple(float(v) for v in direction)
        nodes.append(JointNode(str(j["name"]), parents[u], tuple(rotations), direction))

    lengths_doc = doc.get("bone_lengths", {})
    lengths = np.zeros(len(nodes))
    names = [n.name for n in nodes]
    for nm in lengths_doc:
        if nm not in names:
            raise TreeSpecError(f"bone length given for unknown joint {nm!r}")
        if names.index(nm) == 0:
            raise TreeSpecError("the root has no incoming bone", 0)
    for u in range(1, len(nodes)):
        if names[u] not in lengths_doc:
            raise TreeSpecError("missing bone length", u)
        lengths[u] = float(lengths_doc[names[u]])
        if not lengths[u] > 0:
            raise TreeSpecError(f"bone length must be positive, got {lengths[u]}", u)

    slots = []
    for k, p in enumerate(params_doc):
        if p.get("kind", "rotation") == POSITION:
            slots.append(ParamSlot(p["name"], POSITION, 0, int(p["component"])))
        elif k not in first_reader:
            raise TreeSpecError(f"parameter slot {p['name']!r} is not used by any rotation")
        else:
            u, a = first_reader[k]
            slots.append(ParamSlot(p["name"], ORIENTATION if u == 0 else ANGLE, u, a))

    try:
        return KinematicTree(str(doc.get("name", "tree")), dim, tuple(nodes), lengths, tuple(slots))
    except TreeSpecError:
        raise
    except TreeError as exc:
        raise TreeSpecError(exc.detail, exc.joint) from None


def tree_to_doc(tree: KinematicTree) -> dict:
    params = []
    for p in tree.params:
        if p.kind == POSITION:
            params.append({"name": p.name, "kind": POSITION, "component": p.component})
        else:
            params.append({"name": p.name, "kind": "rotation"})
    joints = []
    for u, node in enumerate(tree.joints):
        entry = {
            "name": node.name,
            "parent": None if node.parent is None else tree.joints[node.parent].name,
            "rotations": [
                {"axis": r.axis, "param": tree.params[r.slot].name, "sign": r.sign} for r in node.rotations
            ],
        }
        if node.translation_direction is not None:
            entry["direction"] = list(node.translation_direction)
        joints.append(entry)
    return {
        "format": FORMAT,
        "name": tree.name,
        "dimension": tree.dimension,
        "params": params,
        "joints": joints,
        "bone_lengths": {tree.joints[u].name: float(tree.bone_lengths[u]) for u in range(1, tree.n_joints)},
    }


def load_tree(path) -> KinematicTree:
    with open(path) as f:
        return build_tree(json.load(f))


def save_tree(tree: KinematicTree, path) -> None:
    Path(path).write_text(json.dumps(tree_to_doc(tree), indent=2) + "\n")


def load_bone_lengths(path) -> dict[str, float]:
    """Read the ``bone_lengths`` section of a tree document (override file)."""
    with open(path) as f:
        doc = json.load(f)
    return {str(k): float(v) for k, v in doc["bone_lengths"].items()}


def with_bone_lengths(tree: KinematicTree, lengths: Mapping[str, float]) -> KinematicTree:
    """Copy of ``tree`` with the named bones replaced; others keep their length."""
    new = np.array(tree.bone_lengths)
    for name, value in lengths.items():
        try:
            u = tree.joint_index(name)
        except ValueError:
            raise TreeSpecError(f"bone length given for unknown joint {name!r}") from None
        if u == tree.root_index:
            raise TreeSpecError("the root has no incoming bone", u)
        if not value > 0:
            raise TreeSpecError(f"bone length must be positive, got {value}", u)
        new[u] = value
    return replace(tree, bone_lengths=new, _cache={})
