"""Forward kinematics on the toy ladder and the human body, plus a gradient check.

Run: python3 demos/01_forward_kinematics.py
"""
import numpy as np

from kinlayer import analytic_jacobian, finite_difference_jacobian, forward_kinematics, human_model, toy_model
from kinlayer.synth import render_toy

# %% The toy ladder: every level adds one bone to each arm
for level in range(4):
    tree = toy_model(level)
    print(f"{tree.name}: {tree.n_joints} joints, parameters {tree.param_names}")

# %% Level 1 at the image centre, arms opened by 0.5 rad, tilted by 0.3 rad
tree = toy_model(1)
theta = np.array([64.0, 40.0, 0.3, 0.5, -0.4, 0.6])
joints = forward_kinematics(tree, theta)
for name, (x, y) in zip(tree.joint_names, joints):
    print(f"  {name:5s} x={x:7.2f} y={y:7.2f}")

# every bone keeps its 45 px length whatever the angles
bones = [np.linalg.norm(joints[c] - joints[p]) for p, c in tree.bones()]
print("bone lengths:", np.round(bones, 12))

# %% The same pose as a coarse text image (every 4th row, every 2nd column)
img = render_toy(tree, theta)
for row in img[::4, ::2]:
    print("".join("#" if v else "." for v in row))

# %% Human body: 17 joints, 27 parameters, millimetres
human = human_model()
rest = forward_kinematics(human, np.zeros(human.n_params))
print("\nhuman rest pose (mm):")
for name, p in zip(human.joint_names, rest):
    print(f"  {name:10s} {p.round(1)}")

# %% Analytic Jacobian against central differences on a random pose
rng = np.random.default_rng(0)
pose = rng.uniform(-1, 1, human.n_params)
A = analytic_jacobian(human, pose)
F = finite_difference_jacobian(human, pose, eps=1e-5)
print(f"\nJacobian shape {A.shape}, max |analytic - numeric| = {np.abs(A - F).max():.2e} mm/rad")
