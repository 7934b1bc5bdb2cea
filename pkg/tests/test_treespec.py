import copy
import json

import numpy as np
import pytest

from kinlayer.kinematics import forward_kinematics
from kinlayer.models import human_doc, toy_doc
from kinlayer.treespec import (
    TreeSpecError,
    build_tree,
    load_bone_lengths,
    load_tree,
    save_tree,
    tree_to_doc,
    with_bone_lengths,
)


def _doc():
    return copy.deepcopy(toy_doc(2))


def test_round_trip_through_file(tmp_path):
    for doc in (toy_doc(3), human_doc()):
        tree = build_tree(doc)
        save_tree(tree, tmp_path / "t.json")
        again = load_tree(tmp_path / "t.json")
        assert again == tree
        theta = np.random.default_rng(0).uniform(-1, 1, tree.n_params)
        np.testing.assert_array_equal(forward_kinematics(again, theta), forward_kinematics(tree, theta))


def test_doc_round_trip_is_exact():
    tree = build_tree(_doc())
    assert tree_to_doc(build_tree(tree_to_doc(tree))) == tree_to_doc(tree)


def test_coupled_slot_reads_both_signs():
    tree = build_tree(toy_doc(0))
    signs = [r.sign for j in tree.joints for r in j.rotations]
    assert signs == [1.0, -1.0]
    assert tree.params[2].kind == "angle"


def test_orientation_slot_kind():
    tree = build_tree(toy_doc(1))
    assert tree.params[tree.param_index("orientation")].kind == "orientation"


def _err(doc):
    with pytest.raises(TreeSpecError) as err:
        build_tree(doc)
    return err.value


def test_cycle_reported():
    doc = _doc()
    doc["joints"][1]["parent"] = "a1"  # a0 <- a1 <- a0
    assert "cycle" in str(_err(doc))


def test_parent_after_child_reported():
    doc = _doc()
    j = doc["joints"]
    j[3], j[1] = j[1], j[3]  # a1 now precedes a0
    e = _err(doc)
    assert e.joint is not None
    assert "order" in str(e)


def test_unknown_parent_reported():
    doc = _doc()
    doc["joints"][4]["parent"] = "nowhere"
    assert _err(doc).joint == 4


def test_second_root_is_unreachable():
    doc = _doc()
    doc["joints"][3]["parent"] = None
    e = _err(doc)
    assert e.joint == 3 and "unreachable" in str(e)


def test_duplicate_joint_name():
    doc = _doc()
    doc["joints"][2]["name"] = "a0"
    assert _err(doc).joint == 2


def test_duplicate_param_slot():
    doc = _doc()
    doc["params"].append({"name": "theta", "kind": "rotation"})
    assert "duplicate" in str(_err(doc))


def test_duplicate_slot_within_joint():
    doc = _doc()
    doc["joints"][3]["rotations"].append(doc["joints"][3]["rotations"][0])
    assert _err(doc).joint == 3


@pytest.mark.parametrize("bad", [0.0, -3.0])
def test_nonpositive_bone_length(bad):
    doc = _doc()
    doc["bone_lengths"]["b1"] = bad
    e = _err(doc)
    assert e.joint == 4


def test_missing_bone_length():
    doc = _doc()
    del doc["bone_lengths"]["a2"]
    assert _err(doc).joint == 5


def test_undeclared_parameter():
    doc = _doc()
    doc["joints"][5]["rotations"][0]["param"] = "ghost"
    assert _err(doc).joint == 5


def test_unused_parameter():
    doc = _doc()
    doc["params"].append({"name": "spare", "kind": "rotation"})
    assert "not used" in str(_err(doc))


def test_rotation_on_position_slot():
    doc = _doc()
    doc["joints"][3]["rotations"][0]["param"] = "x"
    assert _err(doc).joint == 3


def test_bad_axis_for_dimension():
    doc = _doc()
    doc["joints"][3]["rotations"][0]["axis"] = "X"
    assert _err(doc).joint == 3


def test_bone_length_override(tmp_path):
    (tmp_path / "b.json").write_text(json.dumps({"bone_lengths": {"a1": 30.0}}))
    tree = with_bone_lengths(build_tree(_doc()), load_bone_lengths(tmp_path / "b.json"))
    assert tree.bone_lengths[tree.joint_index("a1")] == 30.0
    assert tree.bone_lengths[tree.joint_index("b1")] == 45.0
    with pytest.raises(TreeSpecError):
        with_bone_lengths(tree, {"a1": 0.0})
    with pytest.raises(TreeSpecError):
        with_bone_lengths(tree, {"nope": 1.0})
