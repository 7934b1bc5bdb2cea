import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kinlayer.kinematics import forward_kinematics
from kinlayer.metrics import (
    MetricReport,
    bone_length_stats,
    mean_angle_error,
    mean_joint_error,
    wrapped_angle_difference,
)
from kinlayer.models import human_model, toy_model


def test_joint_error_identity_and_345():
    a = np.zeros((2, 3, 2))
    assert mean_joint_error(a, a) == 0.0
    b = a.copy()
    b[0, 1] = [3.0, 4.0]
    assert mean_joint_error(b, a) == pytest.approx(5.0 / 6)


def test_joint_error_length_mismatch():
    with pytest.raises(ValueError):
        mean_joint_error(np.zeros((2, 3, 2)), np.zeros((3, 3, 2)))


@settings(max_examples=50)
@given(
    a=arrays(np.float64, (4, 5, 3), elements=st.floats(-1e3, 1e3)),
    b=arrays(np.float64, (4, 5, 3), elements=st.floats(-1e3, 1e3)),
)
def test_joint_error_symmetric(a, b):
    assert mean_joint_error(a, b) == mean_joint_error(b, a)
    assert mean_joint_error(a, b, root_index=0) == mean_joint_error(b, a, root_index=0)


def test_root_relative_ignores_translation():
    tree = human_model()
    j = forward_kinematics(tree, np.random.default_rng(0).uniform(-1, 1, 27))
    assert mean_joint_error(j + [100.0, -20.0, 5.0], j, root_index=0) == pytest.approx(0.0, abs=1e-12)
    assert mean_joint_error(j + [100.0, 0.0, 0.0], j) == pytest.approx(100.0)


def test_angle_error_wraps_and_averages():
    tree = toy_model(1)  # angle slots: orientation, theta, angle_a1, angle_b1
    gt = np.zeros((1, 6))
    off = gt.copy()
    off[0, 3] += 2 * np.pi
    assert mean_angle_error(off, gt, tree) == pytest.approx(0.0, abs=1e-12)
    off = gt.copy()
    off[0, 2] = np.pi / 2
    off[0, 0] = 1e6  # positions are ignored
    assert mean_angle_error(off, gt, tree) == pytest.approx(np.pi / 8)
    tree0 = toy_model(0)
    assert mean_angle_error([[0, 0, 0.5]], [[9, 9, -0.5]], tree0) == pytest.approx(1.0)


def test_angle_error_layout_mismatch():
    with pytest.raises(ValueError):
        mean_angle_error(np.zeros((1, 3)), np.zeros((1, 3)), toy_model(1))


def test_wrapped_difference_range():
    d = wrapped_angle_difference(np.linspace(-20, 20, 101), 0.3)
    assert np.all((d >= 0) & (d <= np.pi))
    assert wrapped_angle_difference(np.pi - 0.1, -np.pi + 0.1) == pytest.approx(0.2)


def test_bone_stats_on_valid_and_two_point():
    tree = toy_model(0)
    joints = forward_kinematics(tree, np.random.default_rng(1).uniform(-1, 1, (20, 3)))
    mean, std = bone_length_stats(joints, tree)
    np.testing.assert_allclose(mean, 45.0)
    assert std.max() < 1e-9
    two = np.array([[[0, 0], [0, 40], [0, 40]], [[0, 0], [0, 50], [0, 50]]], dtype=float)
    mean, std = bone_length_stats(two, tree)
    np.testing.assert_allclose(mean, [45, 45])
    np.testing.assert_allclose(std, [5, 5])


def test_bone_stats_empty():
    with pytest.raises(ValueError):
        bone_length_stats(np.zeros((0, 3, 2)), toy_model(0))


def test_metric_report_rows():
    tree = toy_model(0)
    params = np.array([[50.0, 50.0, 0.2], [60.0, 40.0, 0.5]])
    j = forward_kinematics(tree, params)
    rep = MetricReport.compute(tree, j, j, params, params)
    assert rep.count == 2 and rep.mean_joint_error == 0.0 and rep.mean_angle_error == 0.0
    rows = dict((k, v) for k, v in rep.rows())
    assert rows["mean_joint_error_px"] == 0.0
    assert rows["bone_mean_px:root-a0"] == pytest.approx(45.0)
