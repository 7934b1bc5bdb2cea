"""Command-line entry point: ``kinlayer <subcommand>`` or ``python -m kinlayer``.

Every number printed or written uses 9 significant digits.  The exit status
is 0 on success, 1 when a check fails and 2 on bad input.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import fitting, learner, synth
from .io import fmt, write_pgm, write_table
from .jacobian import analytic_jacobian, finite_difference_jacobian
from .kinematics import TreeError, forward_kinematics
from .metrics import MetricReport
from .models import BUILTIN_TREES, human_model, resolve_tree, straight_arm_pose, toy_model
from .treespec import load_bone_lengths, with_bone_lengths

FORMATS = f"""\
file formats
  tree document (JSON, "kinlayer-tree/1"):
      {{"format", "name", "dimension": 2|3,
       "params": [{{"name", "kind": "position"|"rotation", "component"}}],
       "joints": [{{"name", "parent": name|null, "direction": [..],
                   "rotations": [{{"axis": "planar"|"X"|"Y"|"Z", "param", "sign"}}]}}],
       "bone_lengths": {{joint: length}}}}
      Builtin names usable instead of a path: {", ".join(BUILTIN_TREES)}.
      A bone-length override file is a JSON object with just "bone_lengths".
  dataset directory: manifest.json, images/NNNNNN.pgm (binary P5, 255 = stroke),
      labels.csv (index, parameters, <joint>_x, <joint>_y; pixels and radians).
  targets table (CSV): frame,<joint>_x,<joint>_y[,<joint>_z],...
  parameters table (CSV): frame,<param names>[,...]; extra columns ignored.
  fit results (CSV): frame,<param names>,loss,converged,iters,restart.
  model file: little-endian binary, magic "KLREG", regime, input side,
      frame size, layer shapes, float64 weights and biases.
  training report (CSV): "#" comment line with hyperparameters, then
      epoch,train_loss,test_joint_error_px,test_angle_error_rad.
  metric report (CSV): metric,value.
  Lines starting with "#" in CSV inputs are ignored.
"""


def _print_rows(rows, out=None):
    out = out or sys.stdout
    for row in rows:
        print(",".join(v if isinstance(v, str) else fmt(v) for v in row), file=out)


def _tree_arg(args):
    lengths = load_bone_lengths(args.bone_lengths) if getattr(args, "bone_lengths", None) else None
    if args.tree == "human":
        # rebuilt rather than patched so the torso follows a new neck length
        return human_model(lengths)
    tree = resolve_tree(args.tree)
    return with_bone_lengths(tree, lengths) if lengths else tree


def _read_params(path, tree):
    from .io import read_table

    header, rows = read_table(path)
    missing = [n for n in tree.param_names if n not in header]
    if missing:
        raise ValueError(f"{path}: missing parameter columns {missing}")
    cols = [header.index(n) for n in tree.param_names]
    return np.array([[float(r[c]) for c in cols] for r in rows])


def cmd_gen_data(args):
    tree = toy_model(args.level)
    ds = synth.generate_dataset(tree, args.count, args.seed, args.split, args.width, args.height, args.stroke)
    synth.save_dataset(ds, args.out)
    print(f"wrote {len(ds)} {args.split} samples of {tree.name} to {args.out}")
    return 0


def cmd_train(args):
    data = synth.load_dataset(args.data)
    test = synth.load_dataset(args.test) if args.test else None
    hyper = learner.TrainConfig(
        widths=tuple(args.widths),
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        decay_epoch=args.decay_epoch,
        seed=args.seed,
    )
    net, report = learner.train(args.regime, data.tree, data, hyper, test=test)
    learner.save_regressor(args.out, net, args.regime, hyper.input_side, [data.width, data.height])
    if args.report:
        report.write_csv(args.report)
    _print_rows([["epoch", "train_loss", "test_joint_error_px", "test_angle_error_rad"]])
    _print_rows(report.rows())
    return 0


def cmd_eval(args):
    net, regime, _, frame = learner.load_regressor(args.model)
    ds = synth.load_dataset(args.data)
    tree = ds.tree
    joints = learner.predict_joints(regime, net, tree, ds.images, frame)
    if regime == learner.Regime.DIRECT_JOINT.value:
        params = learner.recover_angles_from_joints(tree, joints)
    else:
        params = learner.predict_params(regime, net, tree, ds.images, frame)
    root = tree.root_index if tree.dimension == 3 else None
    report = MetricReport.compute(tree, joints, ds.joints, params, ds.params, units="px", root_index=root)
    rows = [["metric", "value"], ["regime", regime], *report.rows()]
    _print_rows(rows)
    if args.out:
        write_table(args.out, rows[0], rows[1:])
    return 0


def _fit_opts(args, tree):
    kw = dict(restarts=args.restarts, max_iters=args.max_iters, seed=args.seed, init=args.init)
    if args.lr is not None:
        kw["learning_rate"] = args.lr
    return fitting.FitOptions.for_tree(tree, **kw)


def cmd_fit(args):
    tree = _tree_arg(args)
    frames, targets = fitting.read_targets(args.targets, tree)
    results = fitting.batch_fit(tree, targets, _fit_opts(args, tree))
    fitting.write_results(args.out, tree, frames, results)
    failed = [f for f, r in zip(frames, results) if r.error or not r.final_loss < args.max_loss]
    for f, r in zip(frames, results):
        status = r.error or ("ok" if r.final_loss < args.max_loss else "high loss")
        print(f"frame {f}: loss {fmt(r.final_loss)} iters {r.iters_used} restart {r.restart_index} {status}")
    return 1 if failed else 0


def grad_check(tree, trials, eps, seed):
    """Largest relative deviation between analytic and central-difference Jacobians."""
    rng = np.random.default_rng(seed)
    theta = np.zeros((trials, tree.n_params))
    theta[:, tree.angle_slots] = rng.uniform(-np.pi, np.pi, (trials, len(tree.angle_slots)))
    span = 100.0 if tree.dimension == 2 else 1000.0
    for k in tree.position_slots:
        if k >= 0:
            theta[:, k] = rng.uniform(-span, span, trials)
    A = analytic_jacobian(tree, theta)
    F = finite_difference_jacobian(tree, theta, eps)
    denom = np.maximum(np.abs(F).max(axis=(-2, -1)), 1.0)
    return float((np.abs(A - F).max(axis=(-2, -1)) / denom).max())


def cmd_grad_check(args):
    names = args.tree or list(BUILTIN_TREES)
    t0 = time.perf_counter()
    ok = True
    for name in names:
        tree = resolve_tree(name)
        dev = grad_check(tree, args.trials, args.eps, args.seed)
        passed = dev < args.tol
        ok &= passed
        print(f"{name}: {args.trials} draws, max relative deviation {fmt(dev)} {'PASS' if passed else 'FAIL'}")
    print(f"elapsed {fmt(time.perf_counter() - t0)} s")
    return 0 if ok else 1


def cmd_render(args):
    tree = _tree_arg(args)
    if tree.dimension != 2:
        raise ValueError("render draws planar trees only")
    if args.params_file:
        params = _read_params(args.params_file, tree)[args.row]
    else:
        params = np.array(args.params, dtype=float)
    if params.shape != (tree.n_params,):
        raise ValueError(f"{tree.name} takes {tree.n_params} parameters ({', '.join(tree.param_names)})")
    img = synth.render_toy(tree, params, args.width, args.height, args.stroke)
    write_pgm(args.out, img)
    print(f"wrote {args.out}")
    return 0


def cmd_human_fit_demo(args):
    tree = human_model(load_bone_lengths(args.bone_lengths) if args.bone_lengths else None)
    opts = fitting.FitOptions.for_tree(tree, restarts=args.restarts, seed=args.seed)
    if args.targets:
        frames, targets = fitting.read_targets(args.targets, tree)
        target = targets[args.frame]
        source = f"{args.targets} frame {frames[args.frame]}"
    else:
        target = forward_kinematics(tree, straight_arm_pose(tree, args.seed, args.side))
        source = f"constructed straight {args.side} arm (seed {args.seed})"
    slot = f"{args.side}_shoulder_y"
    rep = fitting.slot_ambiguity(tree, target, slot, args.fits, opts, args.max_loss)
    print(f"target: {source}")
    print(f"slot: {slot}")
    print("fit,seed,loss,iters,roll_rad,roll_wrapped_rad,accepted")
    for i, r in enumerate(rep.fits):
        print(
            ",".join([str(i), str(opts.seed + i), fmt(r.final_loss), str(r.iters_used)])
            + f",{fmt(r.params[tree.param_index(slot)])},{fmt(rep.wrapped[i])},{int(rep.accepted[i])}"
        )
    if args.out:
        header = ["fit", *tree.param_names, "loss"]
        write_table(args.out, header, ([str(i), *r.params, r.final_loss] for i, r in enumerate(rep.fits)))
    found = rep.found(args.min_separation)
    if rep.pair is not None:
        i, j = rep.pair
        print(f"widest accepted pair: fits {i} and {j}, roll separation {fmt(rep.separation)} rad")
    print(f"ambiguity {'FOUND' if found else 'NOT FOUND'} (need > {fmt(args.min_separation)} rad, loss < {fmt(args.max_loss)})")
    return 0 if found else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kinlayer",
        description="Forward kinematics layer, model fitting and toy pose-regression experiments.",
        epilog=FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help, description=help, epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    g = add("gen-data", cmd_gen_data, "render a labelled toy dataset")
    g.add_argument("--level", type=int, required=True, choices=range(4))
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split", choices=synth.SPLITS, default="train")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--width", type=int, default=synth.IMAGE_SIZE)
    g.add_argument("--height", type=int, default=synth.IMAGE_SIZE)
    g.add_argument("--stroke", type=float, default=synth.DEFAULT_STROKE, help="line width in pixels")

    d = learner.TrainConfig()
    t = add("train", cmd_train, "train a regressor under one output regime")
    t.add_argument("--regime", choices=learner.REGIMES, required=True)
    t.add_argument("--data", required=True, help="training dataset directory")
    t.add_argument("--test", help="test dataset directory for per-epoch metrics")
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--report", help="training report CSV to write")
    t.add_argument("--widths", type=int, nargs="+", default=list(d.widths))
    t.add_argument("--epochs", type=int, default=d.epochs)
    t.add_argument("--batch-size", type=int, default=d.batch_size)
    t.add_argument("--lr", type=float, default=d.learning_rate)
    t.add_argument("--momentum", type=float, default=d.momentum)
    t.add_argument("--weight-decay", type=float, default=d.weight_decay)
    t.add_argument("--decay-epoch", type=int, default=d.decay_epoch)
    t.add_argument("--seed", type=int, default=0)

    e = add("eval", cmd_eval, "score a trained model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="metric report CSV to write")

    def fit_flags(sp):
        sp.add_argument("--restarts", type=int, default=10)
        sp.add_argument("--max-iters", type=int, default=2000)
        sp.add_argument("--lr", type=float, help="first trial step (default 0.1 planar, 1e-5 spatial)")
        sp.add_argument("--init", choices=("zeros", "random"), default="random")
        sp.add_argument("--seed", type=int, default=0)

    f = add("fit", cmd_fit, "fit motion parameters to target joints, frame by frame")
    f.add_argument("--tree", required=True, help="tree document or builtin name")
    f.add_argument("--bone-lengths", help="bone-length override file")
    f.add_argument("--targets", required=True)
    f.add_argument("--out", required=True, help="results CSV to write")
    f.add_argument("--max-loss", type=float, default=1e-6, help="loss above which a frame counts as failed")
    fit_flags(f)

    c = add("grad-check", cmd_grad_check, "compare the analytic Jacobian with central differences")
    c.add_argument("--tree", action="append", help="tree document or builtin name (repeatable; default all builtins)")
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--eps", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-6)
    c.add_argument("--seed", type=int, default=0)

    r = add("render", cmd_render, "draw a planar pose as a binary PGM")
    r.add_argument("--tree", required=True)
    r.add_argument("--bone-lengths")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--params", type=float, nargs="+", help="parameter values in tree order (pixels, radians)")
    src.add_argument("--params-file", help="parameters table")
    r.add_argument("--row", type=int, default=0, help="row of --params-file to draw")
    r.add_argument("--out", required=True)
    r.add_argument("--width", type=int, default=synth.IMAGE_SIZE)
    r.add_argument("--height", type=int, default=synth.IMAGE_SIZE)
    r.add_argument("--stroke", type=float, default=synth.DEFAULT_STROKE)

    h = add("human-fit-demo", cmd_human_fit_demo, "show that a straight arm leaves the shoulder roll undetermined")
    h.add_argument("--targets", help="3D targets table for the human model (default: constructed straight arm)")
    h.add_argument("--frame", type=int, default=0, help="row of --targets to use")
    h.add_argument("--bone-lengths")
    h.add_argument("--side", choices=("l", "r"), default="l")
    h.add_argument("--fits", type=int, default=6, help="independent seeded fits")
    h.add_argument("--restarts", type=int, default=3, help="restarts per fit")
    h.add_argument("--seed", type=int, default=100)
    h.add_argument("--max-loss", type=float, default=1e-6)
    h.add_argument("--min-separation", type=float, default=0.5, help="radians")
    h.add_argument("--out", help="CSV of every fitted parameter vector")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, TreeError, OSError, synth.SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
