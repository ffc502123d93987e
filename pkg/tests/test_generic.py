"""Quadratic majorization of generic losses and the outer model-iteration loop."""

import math

import numpy as np
import pytest

from conftest import log_linear_fit, make_classification_dataset, make_problem, ridge_solution
from hsdmpg.baselines import fgd_reference
from hsdmpg.generic import (
    GenericConfig,
    QuadraticModel,
    build_quadratic_model,
    hsdmpg_generic_solve,
    outer_tolerance,
)
from hsdmpg.losses import ErmProblem, make_loss
from hsdmpg.oracle import IfoCounter
from hsdmpg.quadratic import HsdmpgConfig, hsdmpg_quadratic_solve
from hsdmpg.svrg import check_component_consistency, finite_sum_view
from hsdmpg.targets import GradNormTarget, OuterIters


def logistic_problem(n=300, d=10, mu=0.01, seed=21):
    data = make_classification_dataset(n, d, 2, seed=seed).scaled_to_unit_norm()
    return ErmProblem(data, make_loss("logistic"), mu)


def generic_defaults(seed=0, budget=6, epochs=3, max_outer=30):
    inner = HsdmpgConfig(
        inner_epochs=epochs,
        growth_rate=1.0,
        schedule="practical",
        gamma="experimental",
        max_outer=60,
    )
    return GenericConfig(
        inner=inner, outer_mode="fixed", budget_outer_iters=budget,
        max_outer=max_outer, seed=seed,
    )


class TestOuterTolerance:
    def test_sigma_equals_l(self):
        # (sigma/2L) exp(-(sigma/2L) t) = (1/2) e^{-t/2}
        assert outer_tolerance(2, sigma=1.0, L=1.0) == pytest.approx(
            0.5 * math.exp(-1.0), rel=1e-12
        )
        assert outer_tolerance(2, sigma=1.0, L=1.0) == pytest.approx(0.18394, rel=1e-4)

    def test_half_sigma_at_zero(self):
        assert outer_tolerance(0, sigma=0.5, L=1.0) == pytest.approx(0.25, rel=1e-12)

    def test_monotone_decreasing(self):
        vals = [outer_tolerance(t, sigma=0.3, L=1.0) for t in range(0, 20)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError, match="sigma"):
            outer_tolerance(1, sigma=0.0, L=1.0)

    def test_rejects_sigma_above_l(self):
        with pytest.raises(ValueError, match="exceed"):
            outer_tolerance(1, sigma=2.0, L=1.0)


class TestQuadraticModel:
    def test_tangency(self, rng):
        problem = logistic_problem()
        center = rng.standard_normal(problem.dim)
        model = build_quadratic_model(problem, center, IfoCounter())
        assert model.objective(center) == pytest.approx(
            problem.objective(center), rel=1e-12
        )
        dev = np.linalg.norm(
            model.gradient_uncounted(center) - problem.gradient_uncounted(center)
        )
        assert dev <= 1e-12 * (1 + np.linalg.norm(problem.gradient_uncounted(center)))

    def test_majorizes_logistic(self, rng):
        problem = make_problem("logistic", n=20, d=4, mu=0.05, seed=31)
        center = rng.standard_normal(4)
        model = build_quadratic_model(problem, center, IfoCounter())
        for _ in range(50):
            theta = center + 2.0 * rng.standard_normal(4)
            assert model.objective(theta) >= problem.objective(theta) - 1e-10

    def test_majorizes_softmax(self, rng):
        problem = make_problem("softmax", n=25, d=4, mu=0.05, seed=32, k=3)
        center = rng.standard_normal(problem.dim)
        model = build_quadratic_model(problem, center, IfoCounter())
        for _ in range(50):
            theta = center + 2.0 * rng.standard_normal(problem.dim)
            assert model.objective(theta) >= problem.objective(theta) - 1e-10

    def test_quadratic_loss_gives_identical_model(self, rng):
        problem = make_problem("quadratic", n=50, d=5, mu=0.1, seed=33)
        center = rng.standard_normal(5)
        model = build_quadratic_model(problem, center, IfoCounter())
        for _ in range(20):
            theta = rng.standard_normal(5)
            assert model.objective(theta) == pytest.approx(
                problem.objective(theta), rel=1e-12, abs=1e-12
            )
            np.testing.assert_allclose(
                model.gradient_uncounted(theta),
                problem.gradient_uncounted(theta),
                rtol=1e-10,
                atol=1e-12,
            )

    def test_build_counts_n_loss_touches(self):
        problem = logistic_problem(n=123)
        counter = IfoCounter()
        build_quadratic_model(problem, np.zeros(problem.dim), counter)
        assert counter.loss_touches == 123
        assert counter.hvp_touches == 0

    def test_model_oracles_count_as_hvp(self, rng):
        problem = logistic_problem(n=40)
        model = build_quadratic_model(problem, np.zeros(problem.dim), IfoCounter())
        counter = IfoCounter()
        model.full_gradient(rng.standard_normal(model.dim), counter)
        model.minibatch_gradient(rng.standard_normal(model.dim), np.arange(7), counter)
        assert counter.hvp_touches == 47
        assert counter.loss_touches == 0

    def test_model_components_consistent(self, rng):
        problem = make_problem("softmax", n=12, d=3, mu=0.2, seed=34, k=3)
        model = build_quadratic_model(
            problem, rng.standard_normal(problem.dim), IfoCounter()
        )
        view = finite_sum_view(model)
        assert check_component_consistency(view, rng.standard_normal(model.dim))

    def test_model_subset_objective_matches_component_mean(self, rng):
        problem = logistic_problem(n=30)
        model = build_quadratic_model(
            problem, rng.standard_normal(problem.dim), IfoCounter()
        )
        idx = np.array([0, 5, 9, 14])
        theta = rng.standard_normal(model.dim)
        mean = np.mean([model.component_value(int(i), theta) for i in idx])
        assert model.subset_objective(theta, idx) == pytest.approx(mean, rel=1e-12)

    def test_solvable_by_quadratic_core(self, rng):
        problem = logistic_problem(n=150, d=6)
        model = build_quadratic_model(problem, np.zeros(6), IfoCounter())
        config = HsdmpgConfig(
            inner_epochs=3, growth_rate=1.0, schedule="practical",
            gamma="experimental", max_outer=300, seed=5,
        )
        theta, trace = hsdmpg_quadratic_solve(
            model, config, GradNormTarget(1e-8), IfoCounter()
        )
        assert trace.metadata["reached_target"]
        # verify against the dense minimizer of the model
        X = problem.data.matrix.toarray()
        H = model.L / problem.n * X.T @ X + problem.mu * np.eye(6)
        star = model.center - np.linalg.solve(H, model.grad_at_center)
        assert np.linalg.norm(theta - star) <= 1e-6


class TestGenericSolve:
    def test_logistic_converges_and_matches_fgd(self):
        problem = logistic_problem()
        ref = fgd_reference(problem, IfoCounter(), tol=1e-10)
        assert ref.reached
        counter = IfoCounter()
        theta, trace = hsdmpg_generic_solve(
            problem, generic_defaults(seed=0), GradNormTarget(1e-6), counter
        )
        assert trace.metadata["reached_target"]
        assert trace.metadata["outer_iters"] <= 30
        assert trace.final.grad_norm <= 1e-6
        assert trace.final.objective - ref.objective <= 1e-8
        objs = trace.metadata["objective_path"]
        assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))

    def test_softmax_fixed_budget_descent(self):
        data = make_classification_dataset(200, 6, 3, seed=40).scaled_to_unit_norm()
        problem = ErmProblem(data, make_loss("softmax", 3), 0.01)
        theta, trace = hsdmpg_generic_solve(
            problem, generic_defaults(seed=2, max_outer=12), OuterIters(12), IfoCounter()
        )
        objs = trace.metadata["objective_path"]
        assert objs[-1] < objs[0]
        assert all(b <= a + 1e-10 for a, b in zip(objs, objs[1:]))

    def test_theory_mode_descent_inequality(self):
        problem = logistic_problem()
        cfg = generic_defaults(seed=1)
        cfg.outer_mode = "theory"
        cfg.max_outer = 15
        _, trace = hsdmpg_generic_solve(problem, cfg, OuterIters(15), IfoCounter())
        assert trace.metadata["subsolves_reached"]
        assert trace.metadata["sigma_eff_used"]
        objs = trace.metadata["objective_path"]
        eps = trace.metadata["eps_schedule"]
        for t in range(1, len(objs)):
            assert objs[t] <= objs[t - 1] + eps[t - 1] + 1e-15

    def test_theory_rate_on_quadratic_loss(self):
        """With sigma = L = 1 (quadratic loss through the generic path), the
        suboptimality decays at least linearly with slope <= -sigma/(4L)."""
        slopes = []
        for seed in range(5):
            problem = make_problem(
                "quadratic", n=120, d=5, mu=0.05, seed=50 + seed, noise=0.2
            )
            star = ridge_solution(problem)
            f_star = problem.objective(star)
            cfg = generic_defaults(seed=seed)
            cfg.outer_mode = "theory"
            cfg.max_outer = 12
            _, trace = hsdmpg_generic_solve(problem, cfg, OuterIters(12), IfoCounter())
            subopts = [rec.objective - f_star for rec in trace.records[1:]]
            slope, _ = log_linear_fit(subopts, floor=1e-13)
            slopes.append(slope)
        assert np.mean(slopes) <= -0.25

    def test_quadratic_through_generic_matches_direct(self):
        problem = make_problem("quadratic", n=100, d=5, mu=0.1, seed=51, noise=0.2)
        star = ridge_solution(problem)
        theta, trace = hsdmpg_generic_solve(
            problem, generic_defaults(seed=3), GradNormTarget(1e-8), IfoCounter()
        )
        assert trace.metadata["reached_target"]
        assert np.linalg.norm(theta - star) <= 1e-6

    def test_seeded_runs_bitwise_identical(self):
        problem = logistic_problem(n=100, d=5)
        cfg = generic_defaults(seed=9, max_outer=4)
        a, _ = hsdmpg_generic_solve(problem, cfg, OuterIters(4), IfoCounter())
        b, _ = hsdmpg_generic_solve(problem, cfg, OuterIters(4), IfoCounter())
        assert np.array_equal(a, b)
