import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinlayer.jacobian import (
    analytic_jacobian,
    finite_difference_jacobian,
    joint_loss,
    joint_loss_and_grad,
    kinematic_backward,
)
from kinlayer.kinematics import forward_kinematics
from kinlayer.models import human_model, random_tree, toy_model


def _params(tree, rng, batch=()):
    theta = rng.uniform(-np.pi, np.pi, batch + (tree.n_params,))
    for k in tree.position_slots:
        if k >= 0:
            theta[..., k] = rng.uniform(-100, 100, batch)
    return theta


def _rel_dev(a, f):
    return np.abs(a - f).max() / max(np.abs(f).max(), 1.0)


# finite differences are the oracle for everything below


@pytest.mark.parametrize("tree", [toy_model(k) for k in range(4)] + [human_model()], ids=lambda t: t.name)
def test_jacobian_matches_central_differences(tree):
    rng = np.random.default_rng(0)
    theta = _params(tree, rng, (25,))
    assert _rel_dev(analytic_jacobian(tree, theta), finite_difference_jacobian(tree, theta)) < 1e-6


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([2, 3]), n=st.integers(1, 12))
def test_jacobian_on_random_trees(seed, dim, n):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, dim, n, max_rotations=3)
    theta = _params(tree, rng)
    assert _rel_dev(analytic_jacobian(tree, theta), finite_difference_jacobian(tree, theta)) < 1e-6


def test_loss_gradient_matches_differences():
    tree = human_model()
    rng = np.random.default_rng(1)
    theta = _params(tree, rng)
    target = forward_kinematics(tree, _params(tree, rng))
    report = joint_loss_and_grad(tree, theta, target)
    eps = 1e-6
    num = np.array(
        [
            (joint_loss(tree, theta + eps * e, target) - joint_loss(tree, theta - eps * e, target)) / (2 * eps)
            for e in np.eye(tree.n_params)
        ]
    )
    np.testing.assert_allclose(report.grad, num, rtol=1e-6, atol=1e-3)
    assert np.isclose(report.loss, joint_loss(tree, theta, target))


def test_zero_residual_zero_gradient():
    tree = toy_model(2)
    theta = _params(tree, np.random.default_rng(2))
    report = joint_loss_and_grad(tree, theta, forward_kinematics(tree, theta))
    assert report.loss == 0.0
    np.testing.assert_array_equal(report.grad, 0.0)


def test_position_columns_are_identity_blocks():
    tree = toy_model(1)
    jac = analytic_jacobian(tree, _params(tree, np.random.default_rng(3)))
    np.testing.assert_array_equal(jac[0::2, 0], 1.0)
    np.testing.assert_array_equal(jac[1::2, 0], 0.0)
    np.testing.assert_array_equal(jac[1::2, 1], 1.0)


def test_angle_does_not_move_joints_outside_subtree():
    tree = toy_model(3)
    jac = analytic_jacobian(tree, _params(tree, np.random.default_rng(4))).reshape(tree.n_joints, 2, -1)
    k = tree.param_index("angle_a2")
    moved = np.flatnonzero(np.abs(jac[:, :, k]).sum(axis=1) > 0)
    assert set(moved) <= set(tree.subtree(tree.joint_index("a2")))


def test_batched_jacobian():
    tree = human_model()
    theta = _params(tree, np.random.default_rng(5), (2, 3))
    jac = analytic_jacobian(tree, theta)
    assert jac.shape == (2, 3, 51, 27)
    np.testing.assert_allclose(jac[1, 2], analytic_jacobian(tree, theta[1, 2]), atol=1e-10)


def test_backward_is_vector_jacobian_product():
    tree = toy_model(3)
    rng = np.random.default_rng(6)
    theta = _params(tree, rng)
    g = rng.normal(size=(tree.n_joints, 2))
    np.testing.assert_allclose(kinematic_backward(tree, theta, g), analytic_jacobian(tree, theta).T @ g.ravel())


def test_bad_eps_rejected():
    with pytest.raises(ValueError):
        finite_difference_jacobian(toy_model(0), np.zeros(3), eps=0.0)


def test_target_shape_checked():
    with pytest.raises(ValueError):
        joint_loss(toy_model(0), np.zeros(3), np.zeros((2, 2)))
