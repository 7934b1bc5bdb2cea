import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinlayer.kinematics import (
    JointNode,
    KinematicTree,
    ParamSlot,
    Rotation,
    TreeError,
    apply_scale,
    axis_rotation,
    bone_lengths_of,
    forward_kinematics,
    global_transforms,
    zero_params,
)
from kinlayer.models import human_model, random_tree, toy_model
from oracles import oracle_fk, planar_matrix as _planar


def _random_params(tree, rng):
    theta = rng.uniform(-np.pi, np.pi, tree.n_params)
    for k in tree.position_slots:
        if k >= 0:
            theta[k] = rng.uniform(-50, 50)
    return theta


def test_oracle_matches_on_random_trees():
    rng = np.random.default_rng(0)
    for i in range(200):
        tree = random_tree(rng, 2 + i % 2, int(rng.integers(1, 12)))
        theta = _random_params(tree, rng)
        np.testing.assert_allclose(forward_kinematics(tree, theta), oracle_fk(tree, theta), rtol=0, atol=1e-12)


@pytest.mark.parametrize("tree", [toy_model(k) for k in range(4)] + [human_model()], ids=lambda t: t.name)
def test_oracle_matches_builtin_trees(tree):
    rng = np.random.default_rng(1)
    for _ in range(20):
        theta = _random_params(tree, rng)
        np.testing.assert_allclose(forward_kinematics(tree, theta), oracle_fk(tree, theta), rtol=0, atol=1e-9)


# --- conventions ---


def test_planar_zero_angle_hangs_down():
    tree = toy_model(0)
    joints = forward_kinematics(tree, [64.0, 64.0, 0.0])
    np.testing.assert_allclose(joints, [[64, 64], [64, 109], [64, 109]], atol=1e-12)


def test_planar_quarter_turn_points_right():
    tree = toy_model(0)
    joints = forward_kinematics(tree, [0.0, 0.0, np.pi / 2])
    np.testing.assert_allclose(joints[1], [45, 0], atol=1e-12)
    np.testing.assert_allclose(joints[2], [-45, 0], atol=1e-12)


def test_toy_level1_orientation_turns_everything():
    tree = toy_model(1)
    theta = np.array([10.0, 20.0, 0.3, 0.4, 0.1, -0.2])
    turned = theta.copy()
    turned[2] += 0.5
    a = forward_kinematics(tree, theta) - [10, 20]
    b = forward_kinematics(tree, turned) - [10, 20]
    np.testing.assert_allclose(b, a @ _planar(0.5).T, atol=1e-12)


def test_axis_rotations_are_right_handed():
    np.testing.assert_allclose(axis_rotation("Z", np.pi / 2)[:3, :3] @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(axis_rotation("X", np.pi / 2)[:3, :3] @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(axis_rotation("Y", np.pi / 2)[:3, :3] @ [0, 0, 1], [1, 0, 0], atol=1e-15)


def test_axis_rotation_derivative_matches_difference():
    for axis in ("planar", "X", "Y", "Z"):
        h = 1e-6
        num = (axis_rotation(axis, 0.7 + h) - axis_rotation(axis, 0.7 - h)) / (2 * h)
        np.testing.assert_allclose(axis_rotation(axis, 0.7, derivative=True), num, atol=1e-9)


def test_axis_rotation_rejects_unknown_axis():
    with pytest.raises(ValueError):
        axis_rotation("W", 0.1)


# --- structural properties ---


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([2, 3]), n=st.integers(2, 15))
def test_bone_lengths_preserved_for_any_pose(seed, dim, n):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, dim, n)
    joints = forward_kinematics(tree, _random_params(tree, rng))
    np.testing.assert_allclose(bone_lengths_of(tree, joints), tree.bone_lengths[1:], rtol=1e-12)


def test_root_position_is_global_position():
    tree = human_model()
    theta = _random_params(tree, np.random.default_rng(2))
    np.testing.assert_allclose(forward_kinematics(tree, theta)[0], theta[tree.position_slots], atol=1e-12)


def test_batched_matches_loop():
    tree = toy_model(3)
    rng = np.random.default_rng(3)
    theta = rng.uniform(-2, 2, (4, 5, tree.n_params))
    out = forward_kinematics(tree, theta)
    assert out.shape == (4, 5, tree.n_joints, 2)
    for i in range(4):
        for j in range(5):
            np.testing.assert_allclose(out[i, j], forward_kinematics(tree, theta[i, j]), atol=1e-12)


def test_transforms_are_rigid():
    tree = human_model()
    T = global_transforms(tree, _random_params(tree, np.random.default_rng(4)))
    R = T[..., :3, :3]
    np.testing.assert_allclose(R @ np.swapaxes(R, -1, -2), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)
    np.testing.assert_allclose(T[..., 3, :], np.broadcast_to([0, 0, 0, 1], T[..., 3, :].shape))


def test_subject_scale_scales_root_relative_joints():
    tree = human_model()
    theta = _random_params(tree, np.random.default_rng(5))
    base = forward_kinematics(tree, theta)
    big = forward_kinematics(apply_scale(tree, 1.1), theta)
    np.testing.assert_allclose(big - big[0], 1.1 * (base - base[0]), atol=1e-9)
    with pytest.raises(ValueError):
        apply_scale(tree, 0.0)


def test_wrong_parameter_count_rejected():
    with pytest.raises(ValueError):
        forward_kinematics(toy_model(0), [1.0, 2.0])


def test_zero_params_shape():
    assert zero_params(toy_model(2), (3,)).shape == (3, 8)


def test_tree_is_immutable():
    tree = toy_model(0)
    with pytest.raises(ValueError):
        tree.bone_lengths[1] = 3.0
    with pytest.raises(AttributeError):
        tree.name = "other"


# --- validation ---


def _chain(parent_of_second=0, length=1.0, direction=(0.0, 1.0), slot=2):
    params = (
        ParamSlot("x", "position", 0, 0),
        ParamSlot("y", "position", 0, 1),
        ParamSlot("a", "angle", 1, 0),
    )
    joints = (
        JointNode("root", None, (), None),
        JointNode("j1", parent_of_second, (Rotation("planar", slot),), direction),
    )
    return KinematicTree("t", 2, joints, [0.0, length], params)


def test_valid_chain_builds():
    assert _chain().n_params == 3


@pytest.mark.parametrize(
    "kwargs",
    [
        {"length": 0.0},
        {"length": -1.0},
        {"direction": (0.0, 2.0)},
        {"direction": (1.0, 0.0, 0.0)},
        {"parent_of_second": 1},
        {"parent_of_second": None},
        {"slot": 0},
        {"slot": 7},
    ],
)
def test_invalid_chain_reports_joint(kwargs):
    with pytest.raises(TreeError) as err:
        _chain(**kwargs)
    assert "joint 1" in str(err.value)
    assert err.value.joint == 1
