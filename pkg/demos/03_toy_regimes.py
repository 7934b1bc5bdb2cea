"""Three ways to regress a toy pose from an image, side by side.

direct_joint regresses joints, kinematic_joint regresses parameters through
the kinematic layer under a joint loss, direct_param regresses parameters
under a parameter loss.  A reduced run (1000 images, 20 epochs, level 1);
the acceptance suite runs the full-size comparison on every level.

Run: python3 demos/03_toy_regimes.py   (under a minute)
"""
from kinlayer import toy_model
from kinlayer.learner import REGIMES, TrainConfig, evaluate, train
from kinlayer.metrics import bone_length_stats
from kinlayer.synth import generate_dataset

tree = toy_model(1)
train_set = generate_dataset(tree, 1000, seed=0)
test_set = generate_dataset(tree, 500, seed=0, split="test")
hyper = TrainConfig(epochs=20, decay_epoch=15)

print("regime            joint err px  angle err rad  max bone std px")
for regime in REGIMES:
    net, report = train(regime, tree, train_set, hyper, test=test_set)
    je, ae, joints = evaluate(regime, net, tree, test_set)
    _, std = bone_length_stats(joints, tree)
    print(f"{regime:16s}  {je:12.2f}  {ae:13.3f}  {std.max():15.3g}")

# only direct_joint can bend its bones; the other two are valid by construction
