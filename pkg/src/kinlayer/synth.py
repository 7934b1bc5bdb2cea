"""Synthetic binary images of planar articulated objects.

Dataset directory layout
------------------------
``manifest.json``
    ``{"format": "kinlayer-toy/1", "tree": <tree document>, "count": N,
    "seed": S, "split": "train"|"test", "width": W, "height": H,
    "stroke": px}``.
``images/NNNNNN.pgm``
    One binary PGM (P5, maxval 255; 0 background, 255 stroke) per sample,
    zero-padded six-digit index.
``labels.csv``
    Header ``index,<param names>,<joint>_x,<joint>_y,...``, one row per
    sample, numbers with 9 significant digits.  Positions and joints are in
    pixels (x right, y down); angles in radians.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import joint_columns, read_pgm, read_table, write_pgm, write_table
from .kinematics import POSITION, KinematicTree, forward_kinematics
from .treespec import build_tree, tree_to_doc

DATASET_FORMAT = "kinlayer-toy/1"
IMAGE_SIZE = 128
DEFAULT_STROKE = 3.0
MAX_ATTEMPTS = 1000
BATCH_DRAWS = 32
MIN_ACCEPTANCE = 0.01
SPLITS = ("train", "test")


class OutOfBoundsError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ToySample:
    image: np.ndarray
    params: np.ndarray
    joints: np.ndarray


@dataclass
class ToyDataset:
    """Rendered images with their ground-truth parameters and joints.

    Arrays are stacked along the first axis: ``images`` (N, H, W) bool,
    ``params`` (N, n_params), ``joints`` (N, J, 2).
    """

    tree: KinematicTree
    images: np.ndarray
    params: np.ndarray
    joints: np.ndarray
    split: str
    seed: int
    stroke: float = DEFAULT_STROKE

    def __len__(self):
        return len(self.params)

    def __getitem__(self, i) -> ToySample:
        return ToySample(self.images[i], self.params[i], self.joints[i])

    @property
    def width(self) -> int:
        return self.images.shape[2]

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def samples(self) -> list[ToySample]:
        return [self[i] for i in range(len(self))]


def in_bounds(joints, width: int, height: int) -> np.ndarray:
    joints = np.asarray(joints)
    x, y = joints[..., 0], joints[..., 1]
    return np.all((x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1), axis=-1)


def render_joints(tree: KinematicTree, joints, width=IMAGE_SIZE, height=IMAGE_SIZE, stroke=DEFAULT_STROKE):
    """Rasterize every bone as a round-capped segment of width ``stroke``.

    Pixel ``(row, col)`` is lit when its centre ``(col, row)`` lies within
    ``stroke / 2`` of a bone segment.
    """
    joints = np.asarray(joints, dtype=float)
    if not in_bounds(joints, width, height):
        raise OutOfBoundsError("pose leaves the image")
    img = np.zeros((height, width), dtype=bool)
    r = stroke / 2.0
    for parent, child in tree.bones():
        a, b = joints[parent], joints[child]
        x0 = max(int(np.floor(min(a[0], b[0]) - r)), 0)
        x1 = min(int(np.ceil(max(a[0], b[0]) + r)), width - 1)
        y0 = max(int(np.floor(min(a[1], b[1]) - r)), 0)
        y1 = min(int(np.ceil(max(a[1], b[1]) + r)), height - 1)
        xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        ab = b - a
        denom = ab @ ab
        if denom > 0:
            t = np.clip(((xs - a[0]) * ab[0] + (ys - a[1]) * ab[1]) / denom, 0.0, 1.0)
        else:
            t = np.zeros_like(xs, dtype=float)
        dx = xs - (a[0] + t * ab[0])
        dy = ys - (a[1] + t * ab[1])
        img[y0 : y1 + 1, x0 : x1 + 1] |= dx * dx + dy * dy <= r * r
    return img


def render_toy(tree: KinematicTree, params, width=IMAGE_SIZE, height=IMAGE_SIZE, stroke=DEFAULT_STROKE):
    """Binary image of the pose ``params`` (positions in pixels)."""
    return render_joints(tree, forward_kinematics(tree, params), width, height, stroke)


def sampling_ranges(tree: KinematicTree) -> np.ndarray:
    """(low, high) per rotational slot used by ``generate_dataset``.

    Angles are drawn from (-pi/2, pi/2).  A slot that opens a mirrored pair
    of bones (read with both signs) is drawn from (0, pi/2) instead, since its
    negation only swaps the two bones.  Position rows are NaN: the root is
    placed after the angles, see ``sample_pose``.
    """
    ranges = np.full((tree.n_params, 2), np.nan)
    signs = {k: set() for k in range(tree.n_params)}
    for node in tree.joints:
        for rot in node.rotations:
            signs[rot.slot].add(np.sign(rot.sign))
    for k, slot in enumerate(tree.params):
        if slot.kind == POSITION:
            continue
        ranges[k] = (0.0, np.pi / 2) if len(signs[k]) > 1 else (-np.pi / 2, np.pi / 2)
    return ranges


def _split_code(split: str) -> int:
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    return SPLITS.index(split)


def _draw(tree, rng, count, width, height):
    """Candidate poses; root uniform over the translations keeping the shape in frame.

    Returns params (count, n), joints (count, J, 2) and a feasibility mask.
    """
    ranges = sampling_ranges(tree)
    params = np.zeros((count, tree.n_params))
    rot = tree.angle_slots
    params[:, rot] = rng.uniform(ranges[rot, 0], ranges[rot, 1], size=(count, len(rot)))
    u = rng.uniform(size=(count, 2))
    rel = forward_kinematics(tree, params)
    low = -rel.min(axis=1)
    high = np.array([width - 1, height - 1]) - rel.max(axis=1)
    ok = np.all(high >= low, axis=1)
    root = low + u * (high - low)
    for c, k in enumerate(tree.position_slots):
        if k >= 0:
            params[:, k] = root[:, c]
    return params, rel + root[:, None, :], ok


def acceptance_rate(tree: KinematicTree, width=IMAGE_SIZE, height=IMAGE_SIZE, draws=2000, seed=0) -> float:
    """Fraction of angle draws whose shape fits the frame."""
    *_, ok = _draw(tree, np.random.default_rng([seed, 99]), draws, width, height)
    return float(ok.mean())


def sample_pose(tree: KinematicTree, rng: np.random.Generator, width=IMAGE_SIZE, height=IMAGE_SIZE):
    """Rejection-sample one in-frame pose; returns (params, joints).

    Angles are drawn first and rejected when the shape cannot fit the frame;
    the root is then uniform over the positions that keep every joint inside.
    """
    for _ in range(MAX_ATTEMPTS):
        params, _, ok = _draw(tree, rng, BATCH_DRAWS, width, height)
        for i in np.flatnonzero(ok):
            joints = forward_kinematics(tree, params[i])
            if in_bounds(joints, width, height):
                return params[i], joints
    raise SamplingError(f"{tree.name}: no in-frame pose after {MAX_ATTEMPTS * BATCH_DRAWS} draws")


def generate_dataset(
    tree: KinematicTree,
    n: int,
    seed: int,
    split: str = "train",
    width: int = IMAGE_SIZE,
    height: int = IMAGE_SIZE,
    stroke: float = DEFAULT_STROKE,
) -> ToyDataset:
    """Draw ``n`` labelled images.  Sample ``i`` depends only on (seed, split, i)."""
    if n <= 0:
        raise ValueError("sample count must be positive")
    if tree.dimension != 2:
        raise ValueError("synthetic images need a planar tree")
    code = _split_code(split)
    rate = acceptance_rate(tree, width, height, seed=seed)
    if rate < MIN_ACCEPTANCE:
        raise SamplingError(f"{tree.name}: only {rate:.2%} of draws fit the frame; sampling range infeasible")
    images = np.empty((n, height, width), dtype=bool)
    params = np.empty((n, tree.n_params))
    joints = np.empty((n, tree.n_joints, 2))
    for i in range(n):
        rng = np.random.default_rng([seed, code, i])
        params[i], joints[i] = sample_pose(tree, rng, width, height)
        images[i] = render_joints(tree, joints[i], width, height, stroke)
    return ToyDataset(tree, images, params, joints, split, seed, stroke)


def save_dataset(ds: ToyDataset, directory) -> None:
    out = Path(directory)
    (out / "images").mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": DATASET_FORMAT,
        "tree": tree_to_doc(ds.tree),
        "count": len(ds),
        "seed": ds.seed,
        "split": ds.split,
        "width": ds.width,
        "height": ds.height,
        "stroke": ds.stroke,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for i in range(len(ds)):
        write_pgm(out / "images" / f"{i:06d}.pgm", ds.images[i])
    header = ["index"] + ds.tree.param_names + joint_columns(ds.tree.joint_names, 2)
    rows = ([i, *ds.params[i], *ds.joints[i].ravel()] for i in range(len(ds)))
    write_table(out / "labels.csv", header, rows)


def load_dataset(directory) -> ToyDataset:
    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"{src}: unknown dataset format {manifest.get('format')!r}")
    tree = build_tree(manifest["tree"])
    n = manifest["count"]
    header, rows = read_table(src / "labels.csv")
    expected = ["index"] + tree.param_names + joint_columns(tree.joint_names, 2)
    if header != expected or len(rows) != n:
        raise ValueError(f"{src}: labels.csv does not match the manifest")
    values = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(n, -1)
    params = values[:, : tree.n_params]
    joints = values[:, tree.n_params :].reshape(n, tree.n_joints, 2)
    images = np.stack([read_pgm(src / "images" / f"{i:06d}.pgm") > 127 for i in range(n)])
    return ToyDataset(tree, images, params, joints, manifest["split"], manifest["seed"], manifest["stroke"])
