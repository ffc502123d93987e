"""Variance-reduced stochastic gradient solver for strongly convex finite sums.

Used both to minimize the proximal subproblems of the outer solvers and,
through :mod:`hsdmpg.baselines`, as a standalone solver on the full ERM
objective.  Accounting: one snapshot gradient costs m touches, one inner
step costs 2 (the sampled component is touched at the current iterate and
at the snapshot).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .targets import GradNormTarget


class DivergenceError(RuntimeError):
    """Iterate became non-finite (step size too large for the problem)."""


class StoppingCapError(RuntimeError):
    """The requested stopping rule was not met within the hard epoch cap."""


@dataclass(frozen=True)
class FixedEpochs:
    """Run exactly this many snapshot epochs."""

    epochs: int


@dataclass
class FiniteSumObjective:
    """A strongly convex average of m component functions.

    ``component_grad`` and ``full_grad`` are raw (uncounted) oracles; the
    solver owns the accounting and prices each access on the ``cost_kind``
    tally of its counter.  ``full_grad`` must equal the average of the
    component gradients.
    """

    m: int
    dim: int
    strong_convexity: float
    smoothness: float
    component_grad: Callable[[int, np.ndarray], np.ndarray]
    full_grad: Callable[[np.ndarray], np.ndarray]
    value: Callable[[np.ndarray], float] | None = None
    component_value: Callable[[int, np.ndarray], float] | None = None
    cost_kind: str = "loss"


@dataclass
class SvrgConfig:
    """Inner-solver knobs.

    Defaults follow the standard recipe: step size 1/(10 smoothness) and
    2m inner iterations per snapshot.  The snapshot is the last iterate
    ("last"); "average" switches to iterate averaging over the epoch.
    """

    stopping: GradNormTarget | FixedEpochs = FixedEpochs(3)
    step_size: float | None = None
    epoch_length: int | None = None
    seed: int = 0
    max_epochs: int = 200
    snapshot: str = "last"

    def resolved_step(self, obj):
        return self.step_size if self.step_size else 1.0 / (10.0 * obj.smoothness)

    def resolved_epoch_length(self, obj):
        return self.epoch_length if self.epoch_length else 2 * obj.m


def check_component_consistency(obj, theta, rtol=1e-10):
    """Average of component gradients must equal the full gradient."""
    avg = np.mean([obj.component_grad(i, theta) for i in range(obj.m)], axis=0)
    full = obj.full_grad(theta)
    err = np.linalg.norm(avg - full)
    return err <= rtol * (1.0 + np.linalg.norm(full))


def _epoch(obj, theta, snapshot, g_full, step, indices):
    for i in indices:
        gi = obj.component_grad(int(i), theta)
        gs = obj.component_grad(int(i), snapshot)
        theta = theta - step * (gi - gs + g_full)
    return theta


def _epoch_with_average(obj, theta, snapshot, g_full, step, indices):
    accum = np.zeros_like(theta)
    for i in indices:
        gi = obj.component_grad(int(i), theta)
        gs = obj.component_grad(int(i), snapshot)
        theta = theta - step * (gi - gs + g_full)
        accum += theta
    return theta, accum / max(len(indices), 1)


def svrg_minimize(obj, init, config, counter, rng=None):
    """Minimize a FiniteSumObjective from ``init``.

    Under a GradNormTarget the returned point's full gradient norm is <= eps,
    verified by the (counted) snapshot evaluation that terminates the loop;
    under FixedEpochs exactly that many snapshot epochs run.  Deterministic
    given the seed / generator.
    """
    if obj.strong_convexity <= 0:
        raise ValueError("objective must be strongly convex")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    step = config.resolved_step(obj)
    epoch_length = config.resolved_epoch_length(obj)
    snapshot = np.array(init, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(snapshot)):
        raise DivergenceError("non-finite initial point")

    fixed = isinstance(config.stopping, FixedEpochs)
    epoch_cap = config.stopping.epochs if fixed else config.max_epochs

    for epoch in range(epoch_cap + (0 if fixed else 1)):
        g_full = obj.full_grad(snapshot)
        counter.add(obj.cost_kind, obj.m)
        if not fixed:
            if np.linalg.norm(g_full) <= config.stopping.eps:
                return snapshot
            if epoch == epoch_cap:
                raise StoppingCapError(
                    f"gradient norm {np.linalg.norm(g_full):.3e} above "
                    f"{config.stopping.eps:.3e} after {epoch_cap} epochs"
                )
        indices = rng.integers(0, obj.m, size=epoch_length)
        if config.snapshot == "average":
            theta, avg = _epoch_with_average(
                obj, snapshot, snapshot, g_full, step, indices
            )
            next_snapshot = avg
        else:
            theta = _epoch(obj, snapshot, snapshot, g_full, step, indices)
            next_snapshot = theta
        counter.add(obj.cost_kind, 2 * epoch_length)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("iterate diverged; reduce the step size")
        snapshot = next_snapshot
    return snapshot


def finite_sum_view(problem, idx=None):
    """View a problem (or a row subset of it) as a FiniteSumObjective.

    With ``idx`` the view averages only those components; its full gradient
    is the subset gradient.  Used by the SVRG baseline (idx=None) and the
    subsampled-snapshot solver.
    """
    if idx is None:
        m = problem.n
        comp = problem.component_grad
        comp_val = problem.component_value
        full = problem.subset_gradient
        value = problem.objective
    else:
        idx = np.asarray(idx)
        m = idx.size
        comp = lambda j, theta: problem.component_grad(int(idx[j]), theta)
        comp_val = lambda j, theta: problem.component_value(int(idx[j]), theta)
        full = lambda theta: problem.subset_gradient(theta, idx)
        value = lambda theta: problem.subset_objective(theta, idx)
    return FiniteSumObjective(
        m=m,
        dim=problem.dim,
        strong_convexity=problem.mu,
        smoothness=problem.curv * problem.max_row_norm(idx) ** 2 + problem.mu,
        component_grad=comp,
        full_grad=full,
        value=value,
        component_value=comp_val,
        cost_kind=problem.cost_kind,
    )
