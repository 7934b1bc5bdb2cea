"""Recover motion parameters from target joints by gradient descent.

Targets and results tables (CSV)
--------------------------------
Targets: header ``frame,<joint>_x,<joint>_y[,<joint>_z],...``, one frame per
row.  Results: header ``frame,<param names>,loss,converged,iters,restart``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .io import joint_columns, read_table, write_table
from .jacobian import _check_target, analytic_jacobian, joint_loss
from .kinematics import KinematicTree, forward_kinematics

INITS = ("zeros", "given", "random")
DIVERGED_LOSS = 1e12


@dataclass
class FitOptions:
    """Gradient-descent settings.

    ``learning_rate`` is the trial step of the first iteration; afterwards
    the trial step is the Barzilai-Borwein estimate (``step_rule="bb"``) or
    ``learning_rate`` again (``step_rule="fixed"``).  Either way the step is
    halved until the loss decreases, at most ``max_halvings`` times.  With
    ``precondition`` the step is taken along the gradient divided by the
    squared column norms of the Jacobian, which evens out the very different
    curvatures of root position and distal angles.

    Restart 0 starts from ``init``; later restarts add uniform noise of
    half-width ``init_spread`` to the rotational slots.  With
    ``init="random"`` every restart draws its angles from that range and puts
    the root at the target's root joint.
    """

    learning_rate: float = 0.1
    max_iters: int = 2000
    grad_tol: float = 1e-8
    loss_tol: float = 1e-10
    restarts: int = 10
    init: str = "random"
    seed: int = 0
    initial: np.ndarray | None = None
    init_spread: float = np.pi
    max_halvings: int = 30
    step_rule: str = "bb"
    precondition: bool = True

    def __post_init__(self):
        for name in ("learning_rate", "grad_tol", "loss_tol", "init_spread"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.init == "given" and self.initial is None:
            raise ValueError("init='given' needs initial parameters")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")
        if self.step_rule not in ("bb", "fixed"):
            raise ValueError("step_rule must be 'bb' or 'fixed'")

    @classmethod
    def for_tree(cls, tree: KinematicTree, **overrides) -> "FitOptions":
        """Defaults scaled to the tree's units (pixels for planar, millimetres for spatial)."""
        if tree.dimension == 3:
            overrides.setdefault("learning_rate", 1e-5)
        return cls(**overrides)


@dataclass
class FitResult:
    params: np.ndarray
    final_loss: float
    iters_used: int
    converged: bool
    restart_index: int
    loss_history: list[float] = field(default_factory=list, repr=False)
    diverged_restarts: list[int] = field(default_factory=list)
    error: str | None = None


def initial_guesses(tree: KinematicTree, target: np.ndarray, opts: FitOptions) -> np.ndarray:
    rng = np.random.default_rng(opts.seed)
    n = tree.n_params
    rot = tree.angle_slots
    R = opts.restarts
    if opts.init == "random":
        theta = np.zeros((R, n))
        theta[:, rot] = rng.uniform(-opts.init_spread, opts.init_spread, size=(R, len(rot)))
        for c, k in enumerate(tree.position_slots):
            if k >= 0:
                theta[:, k] = target[tree.root_index, c]
        return theta
    base = np.zeros(n) if opts.init == "zeros" else np.asarray(opts.initial, dtype=float)
    if base.shape != (n,):
        raise ValueError(f"initial parameters must have shape ({n},)")
    theta = np.tile(base, (R, 1))
    theta[1:, rot] += rng.uniform(-opts.init_spread, opts.init_spread, size=(R - 1, len(rot)))
    return theta


def _loss_grad_scale(tree, theta, target, precondition):
    resid = forward_kinematics(tree, theta) - target
    loss = 0.5 * np.sum(resid**2, axis=(-2, -1))
    jac = analytic_jacobian(tree, theta)
    grad = np.einsum("brk,br->bk", jac, resid.reshape(len(theta), -1))
    if not precondition:
        return loss, grad, np.ones_like(grad)
    d = np.einsum("brk,brk->bk", jac, jac)
    floor = 1e-9 * d.max(axis=1, keepdims=True) + 1e-300
    return loss, grad, 1.0 / np.maximum(d, floor)


def fit_model(tree: KinematicTree, target, opts: FitOptions | None = None) -> FitResult:
    """Minimise ``0.5 * ||FK(params) - target||^2`` from several starts.

    Restarts run side by side as one batch.  Each one stops when its gradient
    or loss drops below tolerance, when no halving of the step decreases the
    loss, or after ``max_iters``.  Once any restart gets under ``loss_tol``
    the rest stop too, since none of them can beat it by a meaningful margin.
    The lowest-loss restart wins (ties go to the lower index).
    """
    opts = opts or FitOptions.for_tree(tree)
    target = _check_target(tree, target)
    if target.ndim != 2:
        raise ValueError("fit_model takes a single target; use batch_fit for several")

    theta = initial_guesses(tree, target, opts)
    R = len(theta)
    loss, grad, scale = _loss_grad_scale(tree, theta, target, opts.precondition)
    diverged = ~np.isfinite(loss) | (loss > DIVERGED_LOSS)
    active = ~diverged
    converged = np.zeros(R, dtype=bool)
    iters = np.zeros(R, dtype=int)
    step = np.full(R, opts.learning_rate)
    history = [[float(v)] for v in loss]

    for _ in range(opts.max_iters):
        done = active & ((np.max(np.abs(grad), axis=1) < opts.grad_tol) | (loss < opts.loss_tol))
        converged |= done
        active &= ~done
        if np.any(converged & (loss < opts.loss_tol)) or not active.any():
            break

        pending = np.flatnonzero(active)
        alpha = step.copy()
        new_theta = theta.copy()
        new_loss = loss.copy()
        accepted = []
        for _ in range(opts.max_halvings + 1):
            cand = theta[pending] - alpha[pending, None] * scale[pending] * grad[pending]
            cand_loss = joint_loss(tree, cand, target)
            ok = cand_loss < loss[pending]
            new_theta[pending[ok]] = cand[ok]
            new_loss[pending[ok]] = cand_loss[ok]
            accepted.extend(pending[ok])
            pending = pending[~ok]
            if not len(pending):
                break
            alpha[pending] *= 0.5
        active[pending] = False  # stalled: no step decreases the loss

        acc = np.sort(np.array(accepted, dtype=int))
        if not len(acc):
            continue
        _, g_new, sc_new = _loss_grad_scale(tree, new_theta[acc], target, opts.precondition)
        if opts.step_rule == "bb":
            # Barzilai-Borwein step measured in the preconditioned metric
            s = new_theta[acc] - theta[acc]
            y = g_new - grad[acc]
            sy = np.einsum("ij,ij->i", s, y)
            ss = np.einsum("ij,ij->i", s, s / sc_new)
            with np.errstate(divide="ignore", invalid="ignore"):
                bb = np.where(sy > 0, ss / sy, alpha[acc] * 2.0)
            step[acc] = bb
        theta[acc] = new_theta[acc]
        loss[acc] = new_loss[acc]
        grad[acc] = g_new
        scale[acc] = sc_new
        iters[acc] += 1
        for r in acc:
            history[r].append(float(loss[r]))
        bad = ~np.isfinite(loss) | (loss > DIVERGED_LOSS)
        diverged |= bad
        active &= ~bad

    done = active & ((np.max(np.abs(grad), axis=1) < opts.grad_tol) | (loss < opts.loss_tol))
    converged |= done

    if diverged.all():
        raise FloatingPointError("every restart diverged")
    ranked = np.where(diverged, np.inf, loss)
    best = int(np.argmin(ranked))
    final = float(joint_loss(tree, theta[best], target))
    return FitResult(
        params=theta[best].copy(),
        final_loss=final,
        iters_used=int(iters[best]),
        converged=bool(converged[best]),
        restart_index=best,
        loss_history=history[best],
        diverged_restarts=[int(r) for r in np.flatnonzero(diverged)],
    )


def batch_fit(tree: KinematicTree, targets, opts: FitOptions | None = None) -> list[FitResult]:
    """Fit every frame independently; a failing frame yields a result with ``error`` set."""
    opts = opts or FitOptions.for_tree(tree)
    results = []
    for target in targets:
        try:
            results.append(fit_model(tree, target, opts))
        except (ValueError, FloatingPointError) as exc:
            results.append(
                FitResult(
                    params=np.full(tree.n_params, np.nan),
                    final_loss=float("nan"),
                    iters_used=0,
                    converged=False,
                    restart_index=-1,
                    error=str(exc),
                )
            )
    return results


@dataclass
class AmbiguityReport:
    """Independent fits of one target and how far apart their values of ``slot`` land."""

    slot: str
    fits: list[FitResult]
    wrapped: np.ndarray  # slot value of every fit folded into (-pi, pi]
    accepted: np.ndarray  # fits with loss below the threshold
    pair: tuple[int, int] | None  # most distant accepted pair
    separation: float  # wrapped distance of that pair (radians)

    def found(self, min_separation: float) -> bool:
        return self.pair is not None and self.separation > min_separation


def slot_ambiguity(
    tree: KinematicTree, target, slot: str, fits: int = 6, opts: FitOptions | None = None, max_loss: float = 1e-6
) -> AmbiguityReport:
    """Fit ``target`` with ``fits`` independently seeded solvers and compare one slot.

    Each solver uses seed ``opts.seed + i``.  A slot the joints do not
    determine (the roll of a straight limb) settles wherever each run drifts,
    so equally good fits disagree in it.
    """
    opts = opts or FitOptions.for_tree(tree)
    k = tree.param_index(slot)
    runs = [fit_model(tree, target, replace(opts, seed=opts.seed + i)) for i in range(fits)]
    values = np.array([r.params[k] for r in runs])
    wrapped = np.pi - (np.pi - values) % (2 * np.pi)
    accepted = np.array([r.final_loss < max_loss for r in runs])
    best, pair = -1.0, None
    for i in np.flatnonzero(accepted):
        for j in np.flatnonzero(accepted):
            if j <= i:
                continue
            d = abs(wrapped[i] - wrapped[j])
            d = min(d, 2 * np.pi - d)
            if d > best:
                best, pair = d, (int(i), int(j))
    return AmbiguityReport(slot, runs, wrapped, accepted, pair, max(best, 0.0))


def read_targets(path, tree: KinematicTree) -> tuple[list[str], np.ndarray]:
    """Frame ids and targets (F, J, D) from a targets table."""
    header, rows = read_table(path)
    expected = ["frame"] + joint_columns(tree.joint_names, tree.dimension)
    if header != expected:
        raise ValueError(f"{path}: expected columns {expected}")
    frames = [r[0] for r in rows]
    coords = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    return frames, coords.reshape(len(rows), tree.n_joints, tree.dimension)


def write_targets(path, tree: KinematicTree, targets, frames=None) -> None:
    targets = np.asarray(targets, dtype=float)
    frames = frames if frames is not None else [str(i) for i in range(len(targets))]
    header = ["frame"] + joint_columns(tree.joint_names, tree.dimension)
    write_table(path, header, ([f, *t.ravel()] for f, t in zip(frames, targets)))


def write_results(path, tree: KinematicTree, frames, results: list[FitResult]) -> None:
    header = ["frame"] + tree.param_names + ["loss", "converged", "iters", "restart"]
    rows = (
        [f, *r.params, r.final_loss, bool(r.converged), r.iters_used, r.restart_index]
        for f, r in zip(frames, results)
    )
    write_table(path, header, rows)

