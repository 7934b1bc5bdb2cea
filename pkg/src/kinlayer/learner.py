"""A small dense regressor trained under the three output regimes.

``direct_joint``
    the network outputs joint coordinates, Euclidean loss on joints.
``kinematic_joint``
    the network outputs motion parameters, the kinematic layer maps them to
    joints and the Euclidean joint loss is backpropagated through it.
``direct_param``
    the network outputs motion parameters, Euclidean loss on parameters;
    joints come from forward kinematics at test time only.

All regimes regress in normalized units: positions and joints are divided by
the frame size, angles stay in radians.

Model file format (little-endian)
---------------------------------
============  =======================================================
bytes 0-7     magic ``b"KLREG\\x00\\x00\\x01"``
uint32        regime code (0 direct_joint, 1 kinematic_joint, 2 direct_param)
uint32        input side (images are downsampled to side x side)
float64 x2    frame width and height used for normalization
uint32        number of layers L
uint32 x 2L   (fan_in, fan_out) of every layer
float64 ...   per layer: weights (fan_in x fan_out, row-major), then biases
============  =======================================================
"""
from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .io import write_table
from .jacobian import analytic_jacobian
from .kinematics import KinematicTree, forward_kinematics
from .metrics import mean_angle_error, mean_joint_error
from .synth import ToyDataset

MAGIC = b"KLREG\x00\x00\x01"


class Regime(str, Enum):
    DIRECT_JOINT = "direct_joint"
    KINEMATIC_JOINT = "kinematic_joint"
    DIRECT_PARAM = "direct_param"


REGIMES = tuple(r.value for r in Regime)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch, batch, regime):
        self.epoch, self.batch, self.regime = epoch, batch, regime
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch} ({regime})")


class AngleRecoveryError(ValueError):
    pass


@dataclass
class Regressor:
    """Fully connected network, rectifier between layers, linear output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def widths(self) -> list[int]:
        return [w.shape[1] for w in self.weights[:-1]]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x, keep=False):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, grad_out):
        """Gradients of the weights and biases given d(loss)/d(output)."""
        gW, gb = [], []
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            gW.append(acts[i].T @ g)
            gb.append(g.sum(axis=0))
            if i:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return gW[::-1], gb[::-1]


def init_regressor(input_dim: int, widths, output_dim: int, seed: int = 0) -> Regressor:
    """He-normal hidden layers, fan-in-scaled normal output layer, zero biases."""
    widths = list(widths)
    if not widths:
        raise ValueError("widths must name at least one hidden layer")
    if min(widths + [input_dim, output_dim]) <= 0:
        raise ValueError("layer widths must be positive")
    rng = np.random.default_rng(seed)
    sizes = [input_dim] + widths + [output_dim]
    weights, biases = [], []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = 1.0 if i == len(sizes) - 2 else 2.0
        weights.append(rng.normal(0.0, np.sqrt(gain / a), size=(a, b)))
        biases.append(np.zeros(b))
    return Regressor(weights, biases)


def output_dim_for(regime: str, tree: KinematicTree) -> int:
    regime = Regime(regime)
    if regime is Regime.DIRECT_JOINT:
        return tree.dimension * tree.n_joints
    return tree.n_params


def downsample(images, side: int = 32) -> np.ndarray:
    """Area-average binary images to side x side and flatten, shape (N, side*side)."""
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None]
    n, h, w = images.shape
    if h % side or w % side:
        raise ValueError(f"image size {h}x{w} is not a multiple of {side}")
    blocks = images.reshape(n, side, h // side, side, w // side)
    return blocks.mean(axis=(2, 4)).reshape(n, side * side)


def _frame_scale(tree: KinematicTree, frame) -> np.ndarray:
    """Per-slot multiplier from normalized to pixel parameters."""
    scale = np.ones(tree.n_params)
    for c, k in enumerate(tree.position_slots):
        if k >= 0:
            scale[k] = frame[c]
    return scale


@dataclass
class TrainConfig:
    """Hyperparameters shared by all regimes.

    SGD with momentum and L2 weight decay on the weights; the rate drops by
    ``decay`` from epoch ``decay_epoch`` on.  With ``mean_bias`` the output
    layer starts at the mean training label (see ``_Objective.output_bias``).
    """

    widths: tuple[int, ...] = (256, 128)
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay_epoch: int = 40
    decay: float = 0.1
    input_side: int = 32
    mean_bias: bool = True
    seed: int = 0


@dataclass
class TrainReport:
    regime: str
    seed: int
    hyper: dict
    train_loss: list[float] = field(default_factory=list)
    test_joint_error: list[float] = field(default_factory=list)
    test_angle_error: list[float] = field(default_factory=list)

    @property
    def final(self) -> dict:
        return {
            "train_loss": self.train_loss[-1] if self.train_loss else float("nan"),
            "mean_joint_error": self.test_joint_error[-1] if self.test_joint_error else float("nan"),
            "mean_angle_error": self.test_angle_error[-1] if self.test_angle_error else float("nan"),
        }

    def rows(self):
        for e, loss in enumerate(self.train_loss):
            je = self.test_joint_error[e] if e < len(self.test_joint_error) else float("nan")
            ae = self.test_angle_error[e] if e < len(self.test_angle_error) else float("nan")
            yield [e + 1, loss, je, ae]

    def write_csv(self, path) -> None:
        comment = f"regime={self.regime} seed={self.seed} " + " ".join(f"{k}={v}" for k, v in self.hyper.items())
        header = ["epoch", "train_loss", "test_joint_error_px", "test_angle_error_rad"]
        write_table(path, header, self.rows(), comment=comment)


class _Objective:
    """Regime-specific loss wiring; returns (mean loss, d loss / d output)."""

    def __init__(self, regime: Regime, tree: KinematicTree, frame):
        self.regime = regime
        self.tree = tree
        self.frame = np.asarray(frame, dtype=float)
        self.scale = _frame_scale(tree, frame)

    def targets(self, ds: ToyDataset) -> np.ndarray:
        if self.regime is Regime.DIRECT_PARAM:
            return ds.params / self.scale
        return (ds.joints / self.frame).reshape(len(ds), -1)

    def output_bias(self, ds: ToyDataset) -> np.ndarray:
        """Starting output: mean training label, seen only through this regime's targets.

        The parameter-from-joints regime places the root at the mean root
        joint and leaves the angles at zero.
        """
        if self.regime is Regime.KINEMATIC_JOINT:
            bias = np.zeros(self.tree.n_params)
            root = ds.joints[:, self.tree.root_index].mean(axis=0) / self.frame
            for c, k in enumerate(self.tree.position_slots):
                if k >= 0:
                    bias[k] = root[c]
            return bias
        return self.targets(ds).mean(axis=0)

    def __call__(self, out, target):
        n = len(out)
        if self.regime is Regime.KINEMATIC_JOINT:
            params = out * self.scale
            pred = forward_kinematics(self.tree, params) / self.frame
            resid = pred.reshape(n, -1) - target
            jac = analytic_jacobian(self.tree, params)
            # d(pred)/d(out) = jac * scale / frame (per joint coordinate)
            row_scale = np.tile(1.0 / self.frame, self.tree.n_joints)
            grad = np.einsum("brk,br->bk", jac, resid * row_scale) * self.scale
        else:
            resid = out - target
            grad = resid
        loss = 0.5 * np.sum(resid**2) / n
        return loss, grad / n


def loss_and_gradients(regime, regressor: Regressor, tree: KinematicTree, dataset: ToyDataset):
    """Mean regime loss over ``dataset`` and its gradients (weights, biases)."""
    frame = np.array([dataset.width, dataset.height], dtype=float)
    objective = _Objective(Regime(regime), tree, frame)
    x = downsample(dataset.images, int(round(np.sqrt(regressor.input_dim))))
    out, acts = regressor.forward(x, keep=True)
    loss, g = objective(out, objective.targets(dataset))
    gW, gb = regressor.backward(acts, g)
    return loss, gW, gb


def predict_params(regime, regressor: Regressor, tree: KinematicTree, images, frame=None) -> np.ndarray:
    """Motion parameters (pixel positions) for the parameter regimes."""
    regime = Regime(regime)
    if regime is Regime.DIRECT_JOINT:
        raise ValueError("direct_joint does not output motion parameters")
    images = np.asarray(images)
    frame = _frame_of(images, frame)
    x = downsample(images, int(round(np.sqrt(regressor.input_dim))))
    out = regressor.forward(x)
    if out.shape[1] != tree.n_params:
        raise ValueError(f"regressor outputs {out.shape[1]} values, tree has {tree.n_params} parameters")
    return out * _frame_scale(tree, frame)


def predict_joints(regime, regressor: Regressor, tree: KinematicTree, images, frame=None) -> np.ndarray:
    """Joint coordinates in pixels, shape (N, J, 2).

    ``direct_joint`` reshapes the network output; the other two regimes pass
    the predicted parameters through forward kinematics.
    """
    regime = Regime(regime)
    images = np.asarray(images)
    single = images.ndim == 2
    frame = _frame_of(images, frame)
    if regime is Regime.DIRECT_JOINT:
        x = downsample(images, int(round(np.sqrt(regressor.input_dim))))
        out = regressor.forward(x)
        if out.shape[1] != tree.n_joints * tree.dimension:
            raise ValueError(f"regressor outputs {out.shape[1]} values, expected {tree.n_joints * tree.dimension}")
        joints = out.reshape(len(out), tree.n_joints, tree.dimension) * frame
    else:
        joints = forward_kinematics(tree, predict_params(regime, regressor, tree, images, frame))
    return joints[0] if single else joints


def _frame_of(images, frame):
    if frame is not None:
        return np.asarray(frame, dtype=float)
    h, w = images.shape[-2:]
    return np.array([w, h], dtype=float)


def recover_angles_from_joints(tree: KinematicTree, joints) -> np.ndarray:
    """Motion parameters read back from planar joint positions.

    The root position is copied; each bone's direction relative to its parent
    bone comes from a two-argument arctangent against the vertical, and the
    angle slots are solved from those relative turns by least squares (exact
    for joints produced by forward kinematics).
    """
    if tree.dimension != 2:
        raise ValueError("angle recovery is defined for planar trees")
    joints = np.asarray(joints, dtype=float)
    single = joints.ndim == 2
    joints = joints.reshape((-1, tree.n_joints, 2))
    A, pinv = _turn_system(tree)
    bones = tree.bones()
    child = [c for _, c in bones]
    parent = [p for p, _ in bones]
    vec = joints[:, child] - joints[:, parent]
    norms = np.linalg.norm(vec, axis=-1)
    if np.any(norms < 1e-12):
        raise AngleRecoveryError("coincident joints: bone angle undefined")
    rest = np.array([np.arctan2(*tree.joints[c].translation_direction) for c in child])
    heading = np.zeros((len(joints), tree.n_joints))
    heading[:, child] = np.arctan2(vec[..., 0], vec[..., 1]) - rest
    turns = heading[:, child] - heading[:, parent]
    turns = (turns + np.pi) % (2 * np.pi) - np.pi
    params = np.zeros((len(joints), tree.n_params))
    params[:, tree.angle_slots] = turns @ pinv.T
    for c, k in enumerate(tree.position_slots):
        if k >= 0:
            params[:, k] = joints[:, tree.root_index, c]
    return params[0] if single else params


def _turn_system(tree: KinematicTree):
    key = ("turn_system",)
    if key not in tree._cache:
        slots = list(tree.angle_slots)
        bones = tree.bones()
        A = np.zeros((len(bones), len(slots)))
        for row, (p, c) in enumerate(bones):
            for rot in tree.joints[c].rotations:
                A[row, slots.index(rot.slot)] += rot.sign
            if p == tree.root_index:
                for rot in tree.joints[p].rotations:
                    A[row, slots.index(rot.slot)] += rot.sign
        tree._cache[key] = (A, np.linalg.pinv(A))
    return tree._cache[key]


def evaluate(regime, regressor, tree: KinematicTree, ds: ToyDataset):
    """(mean joint error px, mean angle error rad, predicted joints) on ``ds``."""
    regime = Regime(regime)
    joints = predict_joints(regime, regressor, tree, ds.images)
    if regime is Regime.DIRECT_JOINT:
        try:
            params = recover_angles_from_joints(tree, joints)
        except AngleRecoveryError:
            params = np.full((len(ds), tree.n_params), np.nan)
    else:
        params = predict_params(regime, regressor, tree, ds.images)
    return mean_joint_error(joints, ds.joints), mean_angle_error(params, ds.params, tree), joints


def train(regime, tree: KinematicTree, dataset: ToyDataset, hyper: TrainConfig | None = None, test=None):
    """Minibatch SGD with momentum; returns (regressor, report).

    The report records the mean training loss of every epoch and, when a
    ``test`` dataset is given, its mean joint and angle errors after every
    epoch.
    """
    regime = Regime(regime)
    hyper = hyper or TrainConfig()
    if dataset.split != "train":
        raise ValueError("train() needs a training split")
    if dataset.tree.param_names != tree.param_names or dataset.tree.n_joints != tree.n_joints:
        raise ValueError("dataset was generated for a different tree")

    frame = np.array([dataset.width, dataset.height], dtype=float)
    x = downsample(dataset.images, hyper.input_side)
    objective = _Objective(regime, tree, frame)
    y = objective.targets(dataset)
    net = init_regressor(x.shape[1], hyper.widths, output_dim_for(regime, tree), hyper.seed)
    if hyper.mean_bias:
        net.biases[-1] = objective.output_bias(dataset)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    rng = np.random.default_rng([hyper.seed, 1])
    report = TrainReport(regime.value, hyper.seed, asdict(hyper))

    n = len(x)
    for epoch in range(hyper.epochs):
        lr = hyper.learning_rate * (hyper.decay if epoch >= hyper.decay_epoch else 1.0)
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, hyper.batch_size)):
            idx = order[start : start + hyper.batch_size]
            out, acts = net.forward(x[idx], keep=True)
            loss, g = objective(out, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b, regime.value)
            total += loss * len(idx)
            gW, gb = net.backward(acts, g)
            for i in range(len(net.weights)):
                vel_w[i] = hyper.momentum * vel_w[i] - lr * (gW[i] + hyper.weight_decay * net.weights[i])
                vel_b[i] = hyper.momentum * vel_b[i] - lr * gb[i]
                net.weights[i] += vel_w[i]
                net.biases[i] += vel_b[i]
        report.train_loss.append(total / n)
        if test is not None:
            je, ae, _ = evaluate(regime, net, tree, test)
            report.test_joint_error.append(je)
            report.test_angle_error.append(ae)
    return net, report


def save_regressor(path, regressor: Regressor, regime, input_side: int, frame) -> None:
    regime = Regime(regime)
    frame = np.asarray(frame, dtype="<f8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", REGIMES.index(regime.value), input_side))
        f.write(frame.tobytes())
        f.write(struct.pack("<I", len(regressor.weights)))
        for W in regressor.weights:
            f.write(struct.pack("<II", *W.shape))
        for W, b in zip(regressor.weights, regressor.biases):
            f.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_regressor(path):
    """Returns (regressor, regime, input_side, frame)."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a regressor file")
    code, side = struct.unpack_from("<II", data, 8)
    frame = np.frombuffer(data, dtype="<f8", count=2, offset=16).astype(float)
    (layers,) = struct.unpack_from("<I", data, 32)
    shapes = [struct.unpack_from("<II", data, 36 + 8 * i) for i in range(layers)]
    pos = 36 + 8 * layers
    weights, biases = [], []
    for a, b in shapes:
        weights.append(np.frombuffer(data, dtype="<f8", count=a * b, offset=pos).reshape(a, b).astype(float))
        pos += 8 * a * b
        biases.append(np.frombuffer(data, dtype="<f8", count=b, offset=pos).astype(float))
        pos += 8 * b
    if pos != len(data):
        raise ValueError(f"{path}: trailing or missing bytes")
    return Regressor(weights, biases), REGIMES[code], side, frame
