"""Comparison solvers: SGD, full SVRG, a subsampled-snapshot SVRG variant,
and full gradient descent (also the reference-optimum generator).

All baselines share the oracle accounting contract: every component
gradient access is one counted touch, traces are recorded once per
effective epoch, and instrumentation is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .oracle import SolverTrace
from .svrg import DivergenceError, _epoch, finite_sum_view
from .targets import EpochsTarget, GradNormTarget, IfoBudget, SuboptTarget


@dataclass
class BaselineConfig:
    """Shared baseline knobs.

    step: None picks the per-algorithm default (SGD: eta_j = 1/(mu (j+1));
        SVRG variants: 1/(10 L_F)); ("constant", eta) or ("inv_t", eta0)
        override it, where inv_t means eta_j = eta0 / (mu (j+1)).
    minibatch: SGD batch size; snapshot_batch: snapshot sample size of the
        subsampled-snapshot solver (None: round(n^0.75)).
    """

    step: tuple[str, float] | None = None
    minibatch: int = 1
    epoch_length: int | None = None
    snapshot_batch: int | None = None
    seed: int = 0
    max_epochs: int = 10_000
    ifo_cap: int | None = None


@dataclass
class ReferenceResult:
    theta: np.ndarray
    objective: float
    grad_norm: float
    reached: bool
    iterations: int


def _target_reached(target, record, epochs, ifo_used):
    if isinstance(target, EpochsTarget):
        return epochs >= target.epochs
    if isinstance(target, GradNormTarget):
        return record.grad_norm <= target.eps
    if isinstance(target, SuboptTarget):
        return record.objective - target.reference <= target.eps
    if isinstance(target, IfoBudget):
        return ifo_used >= target.budget
    raise TypeError(f"unsupported target {target!r}")


def fgd_reference(problem, counter, tol=1e-10, max_iters=500_000, step=None):
    """Full gradient descent with step 1/L_F until the gradient norm is <= tol.

    Returns the iterate and its objective value for use as a reference
    optimum; ``reached`` is False when the iteration cap fired first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if step is None:
        step = 1.0 / problem.smoothness_bound()
    theta = np.zeros(problem.dim)
    grad_norm = math.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        grad = problem.full_gradient(theta, counter)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            break
        theta -= step * grad
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("full gradient descent diverged")
    return ReferenceResult(
        theta=theta,
        objective=problem.objective(theta),
        grad_norm=grad_norm,
        reached=grad_norm <= tol,
        iterations=iterations,
    )


def fgd_solve(problem, config, target, counter, reference=None):
    """Full gradient descent as a traced baseline (one record per step)."""
    step_kind, step0 = config.step if config.step else ("constant", None)
    step = step0 if step0 else 1.0 / problem.smoothness_bound()
    if step_kind == "inv_t":
        raise ValueError("full gradient descent uses a constant step")
    theta = np.zeros(problem.dim)
    trace = SolverTrace(solver="fgd", seed=config.seed, reference=reference)
    ifo_start = counter.total
    record = trace.record(problem, theta, counter, outer_iter=0)
    epochs = 0
    reached = _target_reached(target, record, 0, 0)
    while not reached and epochs < config.max_epochs:
        grad = problem.full_gradient(theta, counter)
        theta = theta - step * grad
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("full gradient descent diverged")
        epochs += 1
        record = trace.record(problem, theta, counter, outer_iter=epochs)
        ifo_used = counter.total - ifo_start
        reached = _target_reached(target, record, epochs, ifo_used)
        if config.ifo_cap is not None and ifo_used >= config.ifo_cap:
            break
    trace.metadata["reached_target"] = bool(reached)
    return theta, trace


def sgd_solve(problem, config, target, counter, reference=None):
    """Minibatch SGD with a constant or 1/t step schedule.

    Samples ``minibatch`` indices uniformly with replacement per step;
    records once per effective epoch (ceil(n / minibatch) steps).
    """
    rng = np.random.default_rng(config.seed)
    b = config.minibatch
    step_kind, step0 = config.step if config.step else ("inv_t", 1.0)
    theta = np.zeros(problem.dim)
    trace = SolverTrace(solver="sgd", seed=config.seed, reference=reference)
    ifo_start = counter.total
    record = trace.record(problem, theta, counter, outer_iter=0)
    steps_per_epoch = math.ceil(problem.n / b)
    epochs = 0
    j = 0
    reached = _target_reached(target, record, 0, 0)
    while not reached and epochs < config.max_epochs:
        for _ in range(steps_per_epoch):
            idx = rng.integers(0, problem.n, size=b)
            grad = problem.minibatch_gradient(theta, idx, counter)
            if step_kind == "constant":
                eta = step0
            elif step_kind == "inv_t":
                eta = step0 / (problem.mu * (j + 1))
            else:
                raise ValueError(f"unknown step schedule {step_kind!r}")
            theta = theta - eta * grad
            j += 1
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("SGD diverged; reduce the step size")
        epochs += 1
        record = trace.record(problem, theta, counter, outer_iter=epochs)
        ifo_used = counter.total - ifo_start
        reached = _target_reached(target, record, epochs, ifo_used)
        if config.ifo_cap is not None and ifo_used >= config.ifo_cap:
            break
    trace.metadata["reached_target"] = bool(reached)
    return theta, trace


def _svrg_like_solve(problem, config, target, counter, reference, snapshot_batch):
    """Shared loop of the SVRG baseline and its subsampled-snapshot variant.

    Per epoch: draw the snapshot set B (the full index range when
    snapshot_batch == n, consuming no randomness), average its gradient at
    the snapshot (|B| touches), then run variance-reduced steps sampling
    within B (2 touches each).  With snapshot_batch == n this is exactly
    the SVRG baseline, so the variant degenerates to it bitwise for equal
    seeds.
    """
    rng = np.random.default_rng(config.seed)
    solver = "svrg" if snapshot_batch == problem.n else "scsg"
    theta = np.zeros(problem.dim)
    trace = SolverTrace(solver=solver, seed=config.seed, reference=reference)
    trace.metadata["snapshot_batch"] = snapshot_batch
    step_kind, step0 = config.step if config.step else ("constant", None)
    if step_kind != "constant":
        raise ValueError("variance-reduced baselines use a constant step")
    ifo_start = counter.total
    record = trace.record(problem, theta, counter, outer_iter=0)
    epochs = 0
    reached = _target_reached(target, record, 0, 0)
    while not reached and epochs < config.max_epochs:
        if snapshot_batch == problem.n:
            view = finite_sum_view(problem, None)
        else:
            batch = np.sort(rng.choice(problem.n, size=snapshot_batch, replace=False))
            view = finite_sum_view(problem, batch)
        step = step0 if step0 else 1.0 / (10.0 * view.smoothness)
        epoch_length = (
            config.epoch_length if config.epoch_length else 2 * snapshot_batch
        )
        g_full = view.full_grad(theta)
        counter.add(view.cost_kind, view.m)
        indices = rng.integers(0, view.m, size=epoch_length)
        theta = _epoch(view, theta, theta, g_full, step, indices)
        counter.add(view.cost_kind, 2 * epoch_length)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("variance-reduced baseline diverged")
        epochs += 1
        record = trace.record(problem, theta, counter, outer_iter=epochs)
        ifo_used = counter.total - ifo_start
        reached = _target_reached(target, record, epochs, ifo_used)
        if config.ifo_cap is not None and ifo_used >= config.ifo_cap:
            break
    trace.metadata["reached_target"] = bool(reached)
    return theta, trace


def svrg_full_solve(problem, config, target, counter, reference=None):
    """The SVRG baseline applied to the full objective."""
    return _svrg_like_solve(problem, config, target, counter, reference, problem.n)


def scsg_solve(problem, config, target, counter, reference=None):
    """SVRG with subsampled snapshot batches (default size round(n^0.75))."""
    batch = config.snapshot_batch
    if batch is None:
        batch = max(1, min(problem.n, round(problem.n**0.75)))
    return _svrg_like_solve(problem, config, target, counter, reference, batch)
