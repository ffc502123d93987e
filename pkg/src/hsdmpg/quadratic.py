"""Hybrid stochastic-deterministic minibatch proximal gradient, quadratic core.

One outer iteration freezes the curvature of a once-sampled anchor subset S
and combines it with a fresh growing minibatch S_t: the surrogate

    P(theta) = F_S(theta) + <g, theta> + (gamma/2) ||theta - w||^2,
    g = grad F_{S_t}(w) - grad F_S(w),

is minimized inexactly by the inner SVRG solver, warm-started at the
current iterate w.  By construction grad P(w) = grad F_{S_t}(w) exactly
(telescoping), so the surrogate's gradient at the center is the hybrid
stochastic-deterministic estimate of grad F(w).

The solver accepts any problem with quadratic per-component structure:
an ErmProblem with the quadratic loss, or the curvature-bound model built
by :mod:`hsdmpg.generic` for non-quadratic losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import SolverTrace
from .svrg import FiniteSumObjective, FixedEpochs, SvrgConfig, svrg_minimize
from .targets import GradNormTarget, IfoBudget, OuterIters, SuboptTarget


@dataclass
class HsdmpgConfig:
    """Anchor size, proximal weight, schedules and inner-solver budgets.

    s: anchor subset size; "auto" rounds n^0.75, "corollary2" scales it by
        nu sqrt(log d) / log n.
    gamma: "theory" for (sqrt(log d) + sqrt(2)) L r^2 / sqrt(s),
        "experimental" for sqrt(log(d)/s), or an explicit positive float.
    nu: variance bound; a float, or "plugin" for the empirical estimate.
    schedule: minibatch growth; "theory" uses the exponential schedule in
        the convergence analysis, "practical" grows initial_batch by
        exp(growth_rate) per iteration.  Both clamp to [1, n].
    schedule_exponent: "lemma" (default) uses exp(mu t / (mu + 2 gamma)),
        the proof-side requirement; "theorem" halves the exponent.
    inner_epochs: fixed SVRG epochs per subproblem; None switches to the
        shrinking gradient-norm tolerance eps_t.
    """

    s: int | str = "auto"
    gamma: float | str = "experimental"
    nu: float | str = 1.0
    schedule: str = "practical"
    schedule_exponent: str = "lemma"
    initial_batch: int = 50
    growth_rate: float = 0.2
    inner_epochs: int | None = None
    max_outer: int = 100
    seed: int = 0
    step_size: float | None = None
    epoch_length: int | None = None
    snapshot: str = "last"
    nu_plugin_samples: int = 1000
    validate: bool = False
    ifo_cap: int | None = None


@dataclass
class ProximalSubproblem:
    """The anchored surrogate minimized at one outer iteration.

    The shared linear and proximal terms are folded into each of the
    anchor components, so the surrogate is an average of |S| strongly
    convex pieces suitable for the inner SVRG solver.
    """

    problem: object
    anchor: np.ndarray
    center: np.ndarray
    shift: np.ndarray
    gamma: float
    grad_batch_at_center: np.ndarray = field(repr=False, default=None)

    @property
    def strong_convexity(self):
        return self.problem.mu + self.gamma

    @property
    def smoothness(self):
        return (
            self.problem.curv * self.problem.max_row_norm(self.anchor) ** 2
            + self.problem.mu
            + self.gamma
        )

    def value(self, theta) -> float:
        diff = theta - self.center
        return (
            self.problem.subset_objective(theta, self.anchor)
            + float(np.dot(self.shift, theta))
            + 0.5 * self.gamma * float(np.dot(diff, diff))
        )

    def gradient(self, theta):
        return (
            self.problem.subset_gradient(theta, self.anchor)
            + self.shift
            + self.gamma * (theta - self.center)
        )

    def as_finite_sum(self) -> FiniteSumObjective:
        anchor = self.anchor
        problem = self.problem
        shift, gamma, center = self.shift, self.gamma, self.center

        def component_grad(j, theta):
            return (
                problem.component_grad(int(anchor[j]), theta)
                + shift
                + gamma * (theta - center)
            )

        def component_value(j, theta):
            diff = theta - center
            return (
                problem.component_value(int(anchor[j]), theta)
                + float(np.dot(shift, theta))
                + 0.5 * gamma * float(np.dot(diff, diff))
            )

        return FiniteSumObjective(
            m=anchor.size,
            dim=problem.dim,
            strong_convexity=self.strong_convexity,
            smoothness=self.smoothness,
            component_grad=component_grad,
            full_grad=self.gradient,
            value=self.value,
            component_value=component_value,
            cost_kind=problem.cost_kind,
        )


def anchor_size(n, d, spec="auto", nu=1.0) -> int:
    """Resolve the anchor subset size; defaults to round(n^0.75)."""
    if spec == "auto":
        s = round(n**0.75)
    elif spec == "corollary2":
        s = round(nu * n**0.75 * math.sqrt(max(math.log(d), 1.0)) / max(math.log(n), 1.0))
    else:
        s = int(spec)
    return max(1, min(n, s))


def gamma_value(mode, problem, s) -> float:
    """Proximal weight: theory and experimental formulas, or explicit."""
    if isinstance(mode, (int, float)):
        gamma = float(mode)
        if gamma <= 0:
            raise ValueError("explicit gamma must be positive")
        return gamma
    logd = math.log(problem.d)
    if mode == "theory":
        return (math.sqrt(logd) + math.sqrt(2.0)) * problem.curv * problem.r**2 / math.sqrt(s)
    if mode == "experimental":
        gamma = math.sqrt(logd / s)
        if gamma <= 0:
            raise ValueError("experimental gamma is 0 when d = 1; pass gamma explicitly")
        return gamma
    raise ValueError(f"unknown gamma mode {mode!r}")


def batch_schedule(
    t,
    n,
    mu,
    gamma,
    nu=1.0,
    mode="theory",
    exponent="lemma",
    initial_batch=50,
    growth_rate=0.2,
) -> int:
    """Minibatch size |S_t| at outer iteration t >= 1, clamped to [1, n].

    Theory mode: ceil(16 nu^2 (mu+2gamma)^2 / mu^2 * exp(mu t / (mu+2gamma)))
    with the exponent halved under exponent="theorem".  Practical mode:
    ceil(initial_batch * exp(growth_rate (t-1))).  Exponentials are taken
    in log space so late iterations cannot overflow.
    """
    if t < 1:
        raise ValueError("outer iteration index starts at 1")
    logn = math.log(n)
    if mode == "theory":
        denom = mu + 2.0 * gamma
        scale = 2.0 if exponent == "theorem" else 1.0
        if exponent not in ("lemma", "theorem"):
            raise ValueError(f"unknown schedule exponent {exponent!r}")
        log_size = math.log(16.0 * nu**2) + 2.0 * math.log(denom / mu) + mu * t / (
            scale * denom
        )
    elif mode == "practical":
        log_size = math.log(initial_batch) + growth_rate * (t - 1)
    else:
        raise ValueError(f"unknown schedule mode {mode!r}")
    if log_size >= logn:
        return n
    return max(1, min(n, math.ceil(math.exp(log_size))))


def inner_tolerance(t, mu, gamma) -> float:
    """Inner gradient-norm tolerance eps_t, strictly decreasing in t."""
    if t < 1:
        raise ValueError("outer iteration index starts at 1")
    denom = mu + 2.0 * gamma
    return mu**1.5 / (4.0 * denom) * math.exp(-mu * (t - 1) / (2.0 * denom))


def build_subproblem(problem, anchor, center, batch, gamma, counter) -> ProximalSubproblem:
    """Assemble the surrogate at ``center`` (counts |batch| + |anchor|)."""
    anchor = np.asarray(anchor)
    batch = np.asarray(batch)
    if anchor.size == 0 or batch.size == 0:
        raise ValueError("anchor and batch must be nonempty")
    grad_batch = problem.minibatch_gradient(center, batch, counter)
    grad_anchor = problem.minibatch_gradient(center, anchor, counter)
    return ProximalSubproblem(
        problem=problem,
        anchor=anchor,
        center=np.array(center, copy=True),
        shift=grad_batch - grad_anchor,
        gamma=gamma,
        grad_batch_at_center=grad_batch,
    )


def estimate_nu(problem, counter, rng, samples=1000) -> float:
    """Plug-in variance-bound estimate from per-sample gradients at 0.

    Empirical variance of the per-sample gradients around their mean,
    divided by mu (a valid preconditioner bound since the Hessian dominates
    mu I).  Counts one touch per sampled row.
    """
    m = min(problem.n, samples)
    if m == problem.n:
        idx = np.arange(problem.n)
    else:
        idx = np.sort(rng.choice(problem.n, size=m, replace=False))
    counter.add(problem.cost_kind, m)
    theta0 = np.zeros(problem.dim)
    Z = problem.predictions(theta0, idx)
    C = problem.loss.batch_grads(Z, problem.labels[idx])
    sq_norms = np.einsum("ij,ij->i", C, C) * problem.data.row_norms(idx) ** 2
    mean_grad = problem.subset_gradient(theta0, idx)
    variance = float(np.mean(sq_norms) - np.dot(mean_grad, mean_grad))
    return math.sqrt(max(variance, 0.0) / problem.mu)


def _target_reached(target, record, t, ifo_used):
    if isinstance(target, OuterIters):
        return t >= target.iters
    if isinstance(target, GradNormTarget):
        return record.grad_norm <= target.eps
    if isinstance(target, SuboptTarget):
        return record.objective - target.reference <= target.eps
    if isinstance(target, IfoBudget):
        return ifo_used >= target.budget
    raise TypeError(f"unsupported target {target!r}")


def hsdmpg_quadratic_solve(problem, config, target, counter, w0=None, trace=None):
    """Run the anchored minibatch proximal gradient loop on a quadratic problem.

    Samples the anchor once (without replacement), then per outer iteration
    samples S_t per the batch schedule (without replacement), builds the
    surrogate and hands it to the inner SVRG solver warm-started at the
    current iterate.  One trace record per outer iteration.  If the target
    is not met within ``config.max_outer`` (or the IFO cap fires), the best
    iterate seen is returned and the trace is flagged.

    Returns (theta, trace).
    """
    if not getattr(problem, "is_quadratic", False):
        raise ValueError("quadratic per-component structure required")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    anchor_rng = np.random.default_rng(seeds[0])
    batch_rng = np.random.default_rng(seeds[1])
    inner_rng = np.random.default_rng(seeds[2])

    nu = config.nu
    if nu == "plugin":
        nu = estimate_nu(problem, counter, anchor_rng, config.nu_plugin_samples)
    s = anchor_size(problem.n, problem.d, config.s, nu)
    gamma = gamma_value(config.gamma, problem, s)
    anchor = np.sort(anchor_rng.choice(problem.n, size=s, replace=False))

    theta = np.zeros(problem.dim) if w0 is None else np.array(w0, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise ValueError("initial point must be finite")

    if trace is None:
        reference = target.reference if isinstance(target, SuboptTarget) else None
        trace = SolverTrace(solver="hsdmpg", seed=config.seed, reference=reference)
    trace.metadata.update(
        {
            "s": s,
            "gamma": gamma,
            "nu": nu,
            "nu_mode": "plugin" if config.nu == "plugin" else "fixed",
            "schedule": config.schedule,
            "schedule_exponent": config.schedule_exponent,
            "inner": "theory_eps" if config.inner_epochs is None else f"epochs:{config.inner_epochs}",
        }
    )
    ifo_start = counter.total
    record = trace.record(problem, theta, counter, outer_iter=0)
    best = (record.objective, theta.copy())
    telescoping_max = 0.0
    reached = _target_reached(target, record, 0, 0)

    t = 0
    while not reached and t < config.max_outer:
        t += 1
        b = batch_schedule(
            t,
            problem.n,
            problem.mu,
            gamma,
            nu=nu,
            mode=config.schedule,
            exponent=config.schedule_exponent,
            initial_batch=config.initial_batch,
            growth_rate=config.growth_rate,
        )
        batch = np.sort(batch_rng.choice(problem.n, size=b, replace=False))
        sub = build_subproblem(problem, anchor, theta, batch, gamma, counter)
        if config.validate:
            dev = np.linalg.norm(sub.gradient(theta) - sub.grad_batch_at_center)
            rel = dev / (1.0 + np.linalg.norm(sub.grad_batch_at_center))
            telescoping_max = max(telescoping_max, rel)
        if config.inner_epochs is None:
            stopping = GradNormTarget(inner_tolerance(t, problem.mu, gamma))
        else:
            stopping = FixedEpochs(config.inner_epochs)
        svrg_cfg = SvrgConfig(
            stopping=stopping,
            step_size=config.step_size,
            epoch_length=config.epoch_length,
            snapshot=config.snapshot,
        )
        theta = svrg_minimize(sub.as_finite_sum(), theta, svrg_cfg, counter, rng=inner_rng)
        record = trace.record(problem, theta, counter, outer_iter=t)
        if record.objective < best[0]:
            best = (record.objective, theta.copy())
        ifo_used = counter.total - ifo_start
        reached = _target_reached(target, record, t, ifo_used)
        if config.ifo_cap is not None and ifo_used >= config.ifo_cap:
            break

    trace.metadata["reached_target"] = bool(reached)
    trace.metadata["outer_iters"] = t
    if config.validate:
        trace.metadata["telescoping_max_rel"] = telescoping_max
    if not reached:
        theta = best[1]
    return theta, trace
