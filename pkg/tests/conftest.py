"""Shared test fixtures: independent oracles and problem builders."""

import numpy as np
import pytest

from hsdmpg.data import Dataset, SparseVector, synthesize_redundant
from hsdmpg.losses import ErmProblem, make_loss


def central_fd_gradient(f, theta, h=None):
    """Central finite differences, step h = 1e-5 (1 + ||theta||)."""
    theta = np.asarray(theta, dtype=np.float64)
    if h is None:
        h = 1e-5 * (1.0 + np.linalg.norm(theta))
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2.0 * h)
    return grad


def dense_design(problem):
    return problem.data.matrix.toarray()


def make_classification_dataset(n, d, k, seed):
    """Gaussian rows with labels from a planted linear model.

    k == 2 gives labels in {-1, +1}; k > 2 gives integer classes 0..k-1.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    if k == 2:
        w = rng.standard_normal(d)
        labels = np.where(X @ w + 0.3 * rng.standard_normal(n) >= 0, 1.0, -1.0)
        labels[:2] = (-1.0, 1.0)  # both classes always present
    else:
        W = rng.standard_normal((k, d))
        labels = np.argmax(X @ W.T + 0.3 * rng.standard_normal((n, k)), axis=1).astype(
            np.float64
        )
        # ensure every class appears so the class count is stable
        labels[:k] = np.arange(k)
    rows = [SparseVector.from_dense(X[i], d) for i in range(n)]
    return Dataset(rows, labels)


def make_problem(kind, n, d, mu, seed, k=3, noise=0.1, duplication=1):
    if kind == "quadratic":
        data = synthesize_redundant(n, d, duplication=duplication, noise=noise, seed=seed)
        return ErmProblem(data, make_loss("quadratic"), mu)
    if kind == "logistic":
        data = make_classification_dataset(n, d, 2, seed)
        return ErmProblem(data, make_loss("logistic"), mu)
    if kind == "softmax":
        data = make_classification_dataset(n, d, k, seed)
        return ErmProblem(data, make_loss("softmax", k), mu)
    raise ValueError(kind)


def ridge_solution(problem):
    """Dense normal-equations oracle (X^T X / n + mu I) theta = X^T y / n."""
    X = dense_design(problem)
    n = problem.n
    A = X.T @ X / n + problem.mu * np.eye(problem.d)
    b = X.T @ problem.labels / n
    return np.linalg.solve(A, b)


def log_linear_fit(values, floor=0.0):
    """Least-squares slope and R^2 of log(values) vs index, truncated at the
    first record at or below ``floor``."""
    values = np.asarray(values, dtype=np.float64)
    keep = values > floor
    if not np.all(keep):
        values = values[: np.argmin(keep)]
    if values.size < 3:
        raise ValueError("need at least 3 records above the floor to fit")
    logs = np.log(values)
    x = np.arange(values.size)
    slope, intercept = np.polyfit(x, logs, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, r2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
