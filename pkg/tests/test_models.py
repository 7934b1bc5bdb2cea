import numpy as np
import pytest

from kinlayer.fitting import FitOptions, fit_model
from kinlayer.kinematics import forward_kinematics
from kinlayer.models import (
    BUILTIN_TREES,
    DEFAULT_HUMAN_BONES,
    builtin_tree,
    compute_subject_scale,
    human_model,
    resolve_tree,
    straight_arm_pose,
    toy_model,
)
from kinlayer.treespec import TreeSpecError, save_tree


@pytest.mark.parametrize("level,n_params,n_joints", [(0, 3, 3), (1, 6, 5), (2, 8, 7), (3, 10, 9)])
def test_toy_ladder_sizes(level, n_params, n_joints):
    tree = toy_model(level)
    assert tree.n_params == n_params
    assert tree.n_joints == n_joints
    assert np.all(tree.bone_lengths[1:] == 45.0)


def test_toy_level_out_of_range():
    with pytest.raises(ValueError):
        toy_model(4)


def test_toy_level0_bones_are_symmetric():
    tree = toy_model(0)
    j = forward_kinematics(tree, [50.0, 40.0, 0.4])
    assert np.isclose(j[1, 0] - 50, -(j[2, 0] - 50))
    assert np.isclose(j[1, 1], j[2, 1])


def test_human_sizes_and_names():
    tree = human_model()
    assert tree.n_joints == 17
    assert tree.n_params == 27
    assert tree.dimension == 3
    assert tree.joint_names[0] == "pelvis"
    assert "l_shoulder_y" in tree.param_names


def test_human_rest_pose_is_upright():
    tree = human_model()
    j = dict(zip(tree.joint_names, forward_kinematics(tree, np.zeros(27))))
    assert j["head"][1] > j["neck"][1] > j["pelvis"][1] > j["l_knee"][1] > j["l_ankle"][1]
    assert j["l_shoulder"][0] > 0 > j["r_shoulder"][0]
    np.testing.assert_allclose(j["torso"], (j["neck"] + j["pelvis"]) / 2, atol=1e-12)


def test_human_torso_follows_neck_in_any_pose():
    tree = human_model()
    j = forward_kinematics(tree, np.random.default_rng(0).uniform(-1, 1, 27))
    names = tree.joint_names
    mid = (j[names.index("neck")] + j[names.index("pelvis")]) / 2
    np.testing.assert_allclose(j[names.index("torso")], mid, atol=1e-9)


def test_human_mirror_symmetry():
    # reflecting x -> -x maps left-limb angles (z, x, y) to right-limb (-z, x, -y)
    tree = human_model()
    rng = np.random.default_rng(1)
    theta = np.zeros(27)
    left = {}
    for name in ("l_shoulder_z", "l_shoulder_x", "l_shoulder_y", "l_elbow_x", "l_hip_z", "l_hip_x", "l_hip_y", "l_knee_x"):
        left[name] = rng.uniform(-1, 1)
        theta[tree.param_index(name)] = left[name]
    mirror = np.zeros(27)
    for name, v in left.items():
        flip = -1.0 if name.endswith(("_z", "_y")) else 1.0
        mirror[tree.param_index("r" + name[1:])] = flip * v
    j = forward_kinematics(tree, theta)
    m = forward_kinematics(tree, mirror)
    for side in ("shoulder", "elbow", "wrist", "hip", "knee", "ankle"):
        a = j[tree.joint_index(f"l_{side}")]
        b = m[tree.joint_index(f"r_{side}")]
        np.testing.assert_allclose([-b[0], b[1], b[2]], a, atol=1e-9)


def test_human_bone_override():
    tree = human_model({"l_elbow": 300.0, "neck": 500.0})
    assert tree.bone_lengths[tree.joint_index("l_elbow")] == 300.0
    assert tree.bone_lengths[tree.joint_index("torso")] == 250.0
    with pytest.raises(TreeSpecError):
        human_model({"torso": 100.0})
    with pytest.raises(TreeSpecError):
        human_model({"tail": 100.0})


def test_subject_scale():
    total = sum(DEFAULT_HUMAN_BONES.values())
    assert compute_subject_scale(1.1 * total, total) == pytest.approx(1.1)
    with pytest.raises(ValueError):
        compute_subject_scale(0.0, total)


def test_builtins_resolve(tmp_path):
    for name in BUILTIN_TREES:
        assert resolve_tree(name) == builtin_tree(name)
    save_tree(toy_model(1), tmp_path / "t.json")
    assert resolve_tree(str(tmp_path / "t.json")) == toy_model(1)
    with pytest.raises(ValueError):
        builtin_tree("toy-9")


def test_straight_arm_pose_makes_roll_invisible():
    tree = human_model()
    theta = straight_arm_pose(tree, seed=3)
    rolled = theta.copy()
    rolled[tree.param_index("l_shoulder_y")] += 1.3
    np.testing.assert_allclose(forward_kinematics(tree, rolled), forward_kinematics(tree, theta), atol=1e-9)


def test_straight_arm_fit_succeeds():
    tree = human_model()
    target = forward_kinematics(tree, straight_arm_pose(tree, seed=4))
    res = fit_model(tree, target, FitOptions.for_tree(tree, restarts=3, seed=0))
    assert res.final_loss < 1e-6
