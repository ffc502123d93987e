"""Anchored minibatch proximal gradient: schedules, surrogate, full solver."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import dense_design, make_problem, ridge_solution
from hsdmpg.data import synthesize_redundant
from hsdmpg.losses import ErmProblem, make_loss
from hsdmpg.oracle import IfoCounter
from hsdmpg.quadratic import (
    HsdmpgConfig,
    anchor_size,
    batch_schedule,
    build_subproblem,
    estimate_nu,
    gamma_value,
    hsdmpg_quadratic_solve,
    inner_tolerance,
)
from hsdmpg.targets import GradNormTarget, IfoBudget, OuterIters


def normalized_ridge(n, d, mu, seed, duplication=1, noise=0.1):
    data = synthesize_redundant(
        n, d, duplication=duplication, noise=noise, seed=seed
    ).scaled_to_unit_norm()
    return ErmProblem(data, make_loss("quadratic"), mu)


class TestGammaValue:
    def test_theory_formula(self):
        stub = SimpleNamespace(d=math.e, curv=1.0, r=1.0)
        got = gamma_value("theory", stub, s=4)
        assert got == pytest.approx((1.0 + math.sqrt(2.0)) / 2.0, rel=1e-12)

    def test_experimental_formula(self):
        stub = SimpleNamespace(d=math.e, curv=1.0, r=1.0)
        assert gamma_value("experimental", stub, s=4) == pytest.approx(0.5, rel=1e-12)

    def test_explicit(self):
        assert gamma_value(0.3, SimpleNamespace(d=5, curv=1.0, r=1.0), s=9) == 0.3

    def test_theory_positive_at_d_one(self):
        stub = SimpleNamespace(d=1, curv=1.0, r=1.0)
        assert gamma_value("theory", stub, s=4) == pytest.approx(
            math.sqrt(2.0) / 2.0, rel=1e-12
        )

    def test_experimental_rejects_d_one(self):
        stub = SimpleNamespace(d=1, curv=1.0, r=1.0)
        with pytest.raises(ValueError, match="gamma"):
            gamma_value("experimental", stub, s=4)

    def test_explicit_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            gamma_value(0.0, SimpleNamespace(d=5, curv=1.0, r=1.0), s=9)


class TestBatchSchedule:
    def test_theorem_exponent_value(self):
        # 16 * (mu+2gamma)^2/mu^2 * exp(mu t / (2(mu+2gamma))) at mu=1, gamma=1/2,
        # t=4 gives ceil(64 e) = 174
        got = batch_schedule(
            4, n=10_000, mu=1.0, gamma=0.5, nu=1.0, mode="theory", exponent="theorem"
        )
        assert got == math.ceil(64.0 * math.e) == 174

    def test_lemma_exponent_value(self):
        got = batch_schedule(
            4, n=10_000, mu=1.0, gamma=0.5, nu=1.0, mode="theory", exponent="lemma"
        )
        assert got == math.ceil(64.0 * math.exp(2.0)) == 473

    def test_clamps_to_n_for_large_t(self):
        for t in (10, 50, 5000):
            assert (
                batch_schedule(t, n=100, mu=1.0, gamma=0.0, nu=1.0, mode="theory")
                == 100
            )

    def test_practical_initial_batch(self):
        assert (
            batch_schedule(
                1, n=10_000, mu=1.0, gamma=0.5, mode="practical", initial_batch=50
            )
            == 50
        )

    def test_practical_growth(self):
        got = batch_schedule(
            6, n=10_000, mu=1.0, gamma=0.5, mode="practical", initial_batch=50,
            growth_rate=0.2,
        )
        assert got == math.ceil(50 * math.exp(1.0))

    def test_nondecreasing_and_reaches_n(self):
        sizes = [
            batch_schedule(t, n=2_000, mu=0.05, gamma=0.1, nu=1.0, mode="theory")
            for t in range(1, 400)
        ]
        assert all(b <= a for a, b in zip(sizes[1:], sizes))
        assert sizes[-1] == 2_000

    def test_no_overflow_at_huge_t(self):
        assert (
            batch_schedule(10**9, n=50, mu=1.0, gamma=0.0, nu=1.0, mode="theory") == 50
        )


class TestInnerTolerance:
    def test_first_iteration(self):
        assert inner_tolerance(1, mu=1.0, gamma=0.5) == pytest.approx(0.125, rel=1e-12)

    def test_fifth_iteration(self):
        want = 0.125 * math.exp(-1.0)
        assert inner_tolerance(5, mu=1.0, gamma=0.5) == pytest.approx(want, rel=1e-12)
        assert inner_tolerance(5, mu=1.0, gamma=0.5) == pytest.approx(
            0.045985, rel=1e-4
        )

    def test_strictly_decreasing(self):
        vals = [inner_tolerance(t, mu=0.3, gamma=0.7) for t in range(1, 30)]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestAnchorSize:
    def test_auto_is_n_power(self):
        assert anchor_size(1000, 20) == round(1000**0.75)

    def test_corollary2_preset(self):
        s = anchor_size(4096, 64, "corollary2", nu=1.0)
        want = round(1.0 * 4096**0.75 * math.sqrt(math.log(64)) / math.log(4096))
        assert s == want

    def test_clamped_to_n(self):
        assert anchor_size(5, 3, 99) == 5
        assert anchor_size(5, 3, 0) == 1


class TestBuildSubproblem:
    def test_batch_equal_anchor_gives_zero_shift(self, rng):
        problem = make_problem("quadratic", n=12, d=4, mu=0.1, seed=0)
        idx = np.array([1, 3, 5, 7])
        center = rng.standard_normal(4)
        sub = build_subproblem(problem, idx, center, idx, 0.5, IfoCounter())
        np.testing.assert_array_equal(sub.shift, np.zeros(4))
        np.testing.assert_allclose(
            sub.gradient(center),
            problem.subset_gradient(center, idx),
            rtol=1e-12,
        )

    def test_telescoping_identity(self, rng):
        problem = make_problem("quadratic", n=20, d=5, mu=0.1, seed=1)
        anchor = np.arange(0, 8)
        batch = np.array([2, 9, 11, 15, 19])
        center = rng.standard_normal(5)
        sub = build_subproblem(problem, anchor, center, batch, 0.7, IfoCounter())
        grad_batch = problem.subset_gradient(center, batch)
        dev = np.linalg.norm(sub.gradient(center) - grad_batch)
        assert dev <= 1e-12 * (1.0 + np.linalg.norm(grad_batch))

    def test_counts_batch_plus_anchor(self):
        problem = make_problem("quadratic", n=10, d=3, mu=0.1, seed=2)
        counter = IfoCounter()
        build_subproblem(
            problem, np.arange(4), np.zeros(3), np.arange(6), 0.5, counter
        )
        assert counter.loss_touches == 10

    def test_value_matches_dense_expansion(self, rng):
        problem = make_problem("quadratic", n=10, d=3, mu=0.2, seed=3)
        anchor = np.array([0, 2, 4, 6])
        batch = np.array([1, 3, 5, 7, 8, 9])
        center = rng.standard_normal(3)
        gamma = 0.4
        sub = build_subproblem(problem, anchor, center, batch, gamma, IfoCounter())
        X = dense_design(problem)
        y = problem.labels

        def dense_P(theta):
            fs = np.mean(
                0.5 * (X[anchor] @ theta - y[anchor]) ** 2
            ) + 0.5 * problem.mu * theta @ theta
            gb = X[batch].T @ (X[batch] @ center - y[batch]) / batch.size
            gs = X[anchor].T @ (X[anchor] @ center - y[anchor]) / anchor.size
            shift = gb - gs  # the mu*center parts cancel
            return fs + shift @ theta + 0.5 * gamma * np.sum((theta - center) ** 2)

        for _ in range(5):
            theta = rng.standard_normal(3)
            assert sub.value(theta) == pytest.approx(dense_P(theta), rel=1e-10)

    def test_finite_sum_components_average_to_gradient(self, rng):
        problem = make_problem("quadratic", n=14, d=4, mu=0.15, seed=4)
        sub = build_subproblem(
            problem,
            np.array([0, 3, 6, 9]),
            rng.standard_normal(4),
            np.array([1, 2, 10]),
            0.3,
            IfoCounter(),
        )
        fs = sub.as_finite_sum()
        theta = rng.standard_normal(4)
        avg = np.mean([fs.component_grad(j, theta) for j in range(fs.m)], axis=0)
        np.testing.assert_allclose(avg, fs.full_grad(theta), rtol=1e-10, atol=1e-12)

    def test_empty_sets_rejected(self):
        problem = make_problem("quadratic", n=10, d=3, mu=0.1, seed=5)
        with pytest.raises(ValueError, match="nonempty"):
            build_subproblem(
                problem, np.array([]), np.zeros(3), np.arange(3), 0.5, IfoCounter()
            )


class TestEstimateNu:
    def test_positive_and_counted(self):
        problem = make_problem("quadratic", n=500, d=6, mu=0.1, seed=6)
        counter = IfoCounter()
        nu = estimate_nu(problem, counter, np.random.default_rng(0), samples=200)
        assert nu > 0 and math.isfinite(nu)
        assert counter.loss_touches == 200

    def test_uses_all_rows_when_small(self):
        problem = make_problem("quadratic", n=50, d=4, mu=0.1, seed=7)
        counter = IfoCounter()
        estimate_nu(problem, counter, np.random.default_rng(0), samples=1000)
        assert counter.loss_touches == 50


class TestQuadraticSolver:
    def test_rejects_generic_loss(self):
        problem = make_problem("logistic", n=30, d=4, mu=0.1, seed=8)
        with pytest.raises(ValueError, match="quadratic"):
            hsdmpg_quadratic_solve(
                problem, HsdmpgConfig(), OuterIters(1), IfoCounter()
            )

    def test_practical_mode_reaches_closed_form(self):
        problem = normalized_ridge(400, 10, mu=0.01, seed=9)
        star = ridge_solution(problem)
        config = HsdmpgConfig(
            gamma="experimental",
            schedule="practical",
            inner_epochs=3,
            growth_rate=0.4,
            max_outer=200,
            seed=0,
            validate=True,
        )
        theta, trace = hsdmpg_quadratic_solve(
            problem, config, GradNormTarget(1e-8), IfoCounter()
        )
        assert trace.metadata["reached_target"]
        assert np.linalg.norm(theta - star) <= 1e-5
        assert trace.metadata["telescoping_max_rel"] <= 1e-12

    def test_theory_mode_reaches_closed_form(self):
        problem = normalized_ridge(300, 10, mu=0.01, seed=10)
        star = ridge_solution(problem)
        config = HsdmpgConfig(
            gamma="theory",
            schedule="theory",
            inner_epochs=None,
            max_outer=2000,
            seed=1,
        )
        theta, trace = hsdmpg_quadratic_solve(
            problem, config, GradNormTarget(1e-6), IfoCounter()
        )
        assert trace.metadata["reached_target"]
        assert np.linalg.norm(theta - star) <= 1e-4

    def test_full_anchor_full_batch_is_proximal_point(self):
        problem = normalized_ridge(30, 5, mu=0.3, seed=11, noise=0.0)
        gamma = 1e-4
        config = HsdmpgConfig(
            s=30,
            gamma=gamma,
            schedule="practical",
            initial_batch=30,
            growth_rate=1.0,
            inner_epochs=40,
            epoch_length=600,
            max_outer=2,
            seed=2,
        )
        theta, trace = hsdmpg_quadratic_solve(
            problem, config, OuterIters(2), IfoCounter()
        )
        X = dense_design(problem)
        A = X.T @ X / 30 + problem.mu * np.eye(5)
        b = X.T @ problem.labels / 30
        w = np.zeros(5)
        for _ in range(2):
            w = np.linalg.solve(A + gamma * np.eye(5), b + gamma * w)
        assert np.linalg.norm(theta - w) <= 1e-6
        assert np.linalg.norm(problem.gradient_uncounted(theta)) <= 1e-6

    def test_hybrid_gradient_unbiased(self, rng):
        problem = make_problem("quadratic", n=30, d=4, mu=0.1, seed=12)
        center = rng.standard_normal(4)
        anchor = np.sort(rng.choice(30, 8, replace=False))
        full = problem.gradient_uncounted(center)
        draws = 2000
        samples = np.empty((draws, 4))
        for rep in range(draws):
            batch = rng.choice(30, 6, replace=False)
            sub = build_subproblem(
                problem, anchor, center, batch, 0.5, IfoCounter()
            )
            samples[rep] = sub.gradient(center)
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(draws)
        np.testing.assert_array_less(np.abs(mean - full), 3.0 * se + 1e-12)

    def test_full_batch_gradient_is_exact(self, rng):
        problem = make_problem("quadratic", n=25, d=4, mu=0.1, seed=13)
        center = rng.standard_normal(4)
        sub = build_subproblem(
            problem,
            np.arange(0, 10),
            center,
            np.arange(25),
            0.3,
            IfoCounter(),
        )
        np.testing.assert_allclose(
            sub.gradient(center),
            problem.gradient_uncounted(center),
            rtol=1e-12,
            atol=1e-14,
        )

    def test_seeded_solves_bitwise_identical(self):
        problem = normalized_ridge(200, 8, mu=0.02, seed=14)
        config = HsdmpgConfig(inner_epochs=2, max_outer=6, seed=3)
        a, _ = hsdmpg_quadratic_solve(problem, config, OuterIters(6), IfoCounter())
        b, _ = hsdmpg_quadratic_solve(problem, config, OuterIters(6), IfoCounter())
        assert np.array_equal(a, b)

    def test_unreached_target_flagged(self):
        problem = normalized_ridge(100, 6, mu=0.01, seed=15)
        config = HsdmpgConfig(inner_epochs=1, max_outer=2, seed=4)
        _, trace = hsdmpg_quadratic_solve(
            problem, config, GradNormTarget(1e-14), IfoCounter()
        )
        assert trace.metadata["reached_target"] is False

    def test_single_epoch_budget_drops_suboptimality(self):
        """A near-single-pass budget on redundant well-conditioned data cuts
        suboptimality by >= 2 orders of magnitude (mean over seeds)."""
        problem = normalized_ridge(
            2000, 10, mu=0.01, seed=16, duplication=16, noise=0.01
        )
        star = ridge_solution(problem)
        f_star = problem.objective(star)
        start_subopt = problem.objective(np.zeros(10)) - f_star
        log_drops = []
        for seed in range(6):
            counter = IfoCounter()
            config = HsdmpgConfig(
                s=150,
                gamma=0.002,
                schedule="practical",
                initial_batch=50,
                growth_rate=1.0,
                inner_epochs=1,
                max_outer=50,
                seed=seed,
            )
            theta, _ = hsdmpg_quadratic_solve(
                problem, config, IfoBudget(int(1.55 * problem.n)), counter
            )
            end_subopt = problem.objective(theta) - f_star
            assert counter.total <= 1.75 * problem.n
            log_drops.append(math.log(start_subopt / max(end_subopt, 1e-300)))
        assert math.exp(np.mean(log_drops)) >= 1e2

    def test_ifo_accounting_per_outer_iteration(self):
        problem = make_problem("quadratic", n=64, d=5, mu=0.1, seed=17)
        counter = IfoCounter()
        s = 16
        epochs = 2
        config = HsdmpgConfig(
            s=s,
            gamma=0.5,
            schedule="practical",
            initial_batch=8,
            growth_rate=0.0,
            inner_epochs=epochs,
            max_outer=3,
            seed=6,
        )
        hsdmpg_quadratic_solve(problem, config, OuterIters(3), counter)
        per_outer = 8 + s + epochs * (s + 2 * (2 * s))
        assert counter.total == 3 * per_outer
