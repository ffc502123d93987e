"""Per-sample loss models and the l2-regularized ERM problem.

The objective is

    F(theta) = (1/n) sum_i loss(theta^T x_i, y_i) + (mu/2) ||theta||^2

with linear predictions.  Three losses are provided: quadratic
(1/2 (z - y)^2), logistic (log(1 + exp(-y z)) with y in {-1,+1}) and
multi-class softmax cross-entropy.  Each exposes value / first derivative /
curvature bound with respect to the prediction z, plus the curvature
constant L and the strong-convexity constant sigma of the scalar loss.

Softmax parameters are flattened class-major: theta[j*d:(j+1)*d] holds the
weight vector of class j, so theta.reshape(k, d) has one class per row.

All oracles are pure given (problem, theta) except for counter updates.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, logsumexp, softmax

# Fallback strong-convexity constant (w.r.t. z) used when schedules need
# sigma > 0 but the loss is only strongly convex on bounded domains.
DEFAULT_SIGMA_EFF = 0.01


class LossModel:
    """Common surface of the per-sample losses."""

    kind: str
    k: int
    L: float
    sigma: float

    def value(self, z, y) -> float:
        raise NotImplementedError

    def grad(self, z, y) -> np.ndarray:
        raise NotImplementedError

    def curv(self, z, y) -> float:
        """Curvature bound at z: ell''(z, y), or the max block bound."""
        raise NotImplementedError

    # batch forms over Z of shape (b, k) and labels of shape (b,)
    def batch_values(self, Z, Y) -> np.ndarray:
        raise NotImplementedError

    def batch_grads(self, Z, Y) -> np.ndarray:
        raise NotImplementedError

    def canonical_labels(self, labels) -> np.ndarray:
        """Map raw dataset labels onto this loss's label convention."""
        raise NotImplementedError


class QuadraticLoss(LossModel):
    kind = "quadratic"
    k = 1
    L = 1.0
    sigma = 1.0

    def value(self, z, y):
        z = float(np.asarray(z).reshape(()))
        return 0.5 * (z - y) ** 2

    def grad(self, z, y):
        z = float(np.asarray(z).reshape(()))
        return np.array([z - y])

    def curv(self, z, y):
        return 1.0

    def batch_values(self, Z, Y):
        diff = Z[:, 0] - Y
        return 0.5 * diff * diff

    def batch_grads(self, Z, Y):
        return (Z[:, 0] - Y)[:, None]

    def canonical_labels(self, labels):
        return np.asarray(labels, dtype=np.float64)


class LogisticLoss(LossModel):
    kind = "logistic"
    k = 1
    L = 0.25
    sigma = 0.0  # only strongly convex on bounded domains

    def value(self, z, y):
        z = float(np.asarray(z).reshape(()))
        self._check_label(y)
        return float(np.logaddexp(0.0, -y * z))

    def grad(self, z, y):
        z = float(np.asarray(z).reshape(()))
        self._check_label(y)
        return np.array([-y * expit(-y * z)])

    def curv(self, z, y):
        z = float(np.asarray(z).reshape(()))
        self._check_label(y)
        p = expit(y * z)
        return float(p * (1.0 - p))

    @staticmethod
    def _check_label(y):
        if y not in (-1, 1, -1.0, 1.0):
            raise ValueError(f"logistic labels must be -1 or +1, got {y!r}")

    def batch_values(self, Z, Y):
        return np.logaddexp(0.0, -Y * Z[:, 0])

    def batch_grads(self, Z, Y):
        return (-Y * expit(-Y * Z[:, 0]))[:, None]

    def canonical_labels(self, labels):
        labels = np.asarray(labels, dtype=np.float64)
        values = np.unique(labels)
        if values.size != 2:
            raise ValueError(
                f"binary classification needs exactly 2 label values, got {values}"
            )
        out = np.where(labels == values[0], -1.0, 1.0)
        return out


class SoftmaxLoss(LossModel):
    kind = "softmax"
    L = 0.5  # standard per-block bound on the softmax Hessian
    sigma = 0.0

    def __init__(self, k):
        if k < 2:
            raise ValueError("softmax needs at least 2 classes")
        self.k = int(k)

    def _check_label(self, y):
        if y != int(y) or not (0 <= int(y) < self.k):
            raise ValueError(f"softmax label must be an integer in [0, {self.k})")
        return int(y)

    def value(self, z, y):
        z = np.asarray(z, dtype=np.float64).reshape(self.k)
        y = self._check_label(y)
        return float(logsumexp(z) - z[y])

    def grad(self, z, y):
        z = np.asarray(z, dtype=np.float64).reshape(self.k)
        y = self._check_label(y)
        p = softmax(z)
        p[y] -= 1.0
        return p

    def curv(self, z, y):
        z = np.asarray(z, dtype=np.float64).reshape(self.k)
        p = softmax(z)
        return float(np.max(p * (1.0 - p)))

    def batch_values(self, Z, Y):
        idx = np.arange(Z.shape[0])
        return logsumexp(Z, axis=1) - Z[idx, Y.astype(np.int64)]

    def batch_grads(self, Z, Y):
        P = softmax(Z, axis=1)
        P[np.arange(Z.shape[0]), Y.astype(np.int64)] -= 1.0
        return P

    def canonical_labels(self, labels):
        labels = np.asarray(labels, dtype=np.float64)
        if not np.all(labels == np.round(labels)):
            raise ValueError("softmax labels must be integers")
        classes = np.unique(labels.astype(np.int64))
        lo, hi = int(classes[0]), int(classes[-1])
        if classes.size != hi - lo + 1:
            raise ValueError(
                f"softmax classes must be contiguous from the minimum, got {classes}"
            )
        if classes.size != self.k:
            raise ValueError(
                f"dataset has {classes.size} classes but the loss expects {self.k}"
            )
        return labels - lo


def make_loss(kind, k=1) -> LossModel:
    if kind == "quadratic":
        return QuadraticLoss()
    if kind == "logistic":
        return LogisticLoss()
    if kind == "softmax":
        return SoftmaxLoss(k)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_value(loss, z, y):
    return loss.value(z, y)


def loss_grad(loss, z, y):
    return loss.grad(z, y)


def loss_curv(loss, z, y):
    return loss.curv(z, y)


class ErmProblem:
    """Dataset + loss + l2 weight, with counted and uncounted oracles.

    Counted oracles (full/minibatch gradients, per-component accesses,
    curvature-row products) price one sample touch as one IFO unit.
    ``objective`` and ``gradient_uncounted`` are instrumentation and never
    touch a counter.
    """

    cost_kind = "loss"

    def __init__(self, data, loss, mu):
        if mu <= 0:
            raise ValueError("mu must be positive")
        self.data = data
        self.loss = loss
        self.mu = float(mu)
        self.labels = loss.canonical_labels(data.labels)
        self.n = data.n
        self.d = data.d
        self.k = loss.k
        self.dim = self.d * self.k
        self.r = data.r
        self._X = data.matrix

    # ------------------------------------------------------------------
    # characteristics

    @property
    def is_quadratic(self):
        return self.loss.kind == "quadratic"

    @property
    def curv(self) -> float:
        """Curvature bound L of the scalar loss w.r.t. the prediction."""
        return self.loss.L

    def smoothness_bound(self) -> float:
        """Upper bound L_F on the smoothness of F w.r.t. theta."""
        return self.loss.L * self.r**2 + self.mu

    def estimate_smoothness(self, iters=50, seed=0) -> float:
        """Power-iteration estimate of the top eigenvalue of the curvature
        bound matrix (L/n) X^T X + mu I, refining ``smoothness_bound``."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        lam = self.smoothness_bound()
        for _ in range(iters):
            w = self._hbar_product(v)
            lam = float(np.dot(v, w))
            nrm = np.linalg.norm(w)
            if nrm == 0:
                return self.mu
            v = w / nrm
        return lam

    def max_row_norm(self, idx=None) -> float:
        if idx is None:
            return self.r
        return float(np.max(self.data.row_norms(idx)))

    # ------------------------------------------------------------------
    # uncounted (instrumentation) oracles

    def predictions(self, theta, idx=None):
        W = theta.reshape(self.k, self.d)
        X = self._X if idx is None else self._X[idx]
        return X @ W.T

    def objective(self, theta) -> float:
        return self.subset_objective(theta, None)

    def subset_objective(self, theta, idx=None) -> float:
        Z = self.predictions(theta, idx)
        Y = self.labels if idx is None else self.labels[np.asarray(idx)]
        mean_loss = float(np.mean(self.loss.batch_values(Z, Y)))
        return mean_loss + 0.5 * self.mu * float(np.dot(theta, theta))

    def gradient_uncounted(self, theta):
        return self._batch_gradient(theta, None)

    def subset_gradient(self, theta, idx=None):
        """Uncounted average gradient over a row subset (all rows if None)."""
        return self._batch_gradient(theta, None if idx is None else np.asarray(idx))

    # ------------------------------------------------------------------
    # counted oracles

    def full_gradient(self, theta, counter):
        counter.add_loss(self.n)
        return self._batch_gradient(theta, None)

    def minibatch_gradient(self, theta, idx, counter):
        idx = np.asarray(idx)
        if idx.size == 0:
            raise ValueError("empty minibatch")
        counter.add_loss(idx.size)
        return self._batch_gradient(theta, idx)

    def _batch_gradient(self, theta, idx):
        W = theta.reshape(self.k, self.d)
        X = self._X if idx is None else self._X[idx]
        Y = self.labels if idx is None else self.labels[idx]
        Z = X @ W.T
        G = self.loss.batch_grads(Z, Y)
        grad_W = (G.T @ X) / X.shape[0] + self.mu * W
        return np.asarray(grad_W).ravel()

    def component_value(self, i, theta) -> float:
        row = self.data.rows[i]
        W = theta.reshape(self.k, self.d)
        z = W[:, row.indices] @ row.values if row.nnz else np.zeros(self.k)
        return self.loss.value(z, self.labels[i]) + 0.5 * self.mu * float(
            np.dot(theta, theta)
        )

    def component_grad(self, i, theta):
        """Gradient of loss_i(theta) + (mu/2)||theta||^2; uncounted, callers
        owning an IfoCounter account one touch per access."""
        row = self.data.rows[i]
        W = theta.reshape(self.k, self.d)
        z = W[:, row.indices] @ row.values if row.nnz else np.zeros(self.k)
        g = self.loss.grad(z, self.labels[i])
        out = self.mu * theta
        if row.nnz:
            if self.k == 1:
                out[row.indices] += g[0] * row.values
            else:
                for j in range(self.k):
                    out[j * self.d + row.indices] += g[j] * row.values
        return out

    def upper_hessian_vp(self, v, counter):
        """Product of the curvature bound matrix with v, computed matrix-free
        from per-row inner products: (L/n) sum_i (x_i^T v) x_i + mu v per
        class block.  Each row touch is priced one IFO unit on the
        curvature-row tally."""
        counter.add_hvp(self.n)
        return self._hbar_product(v)

    def _hbar_product(self, v):
        V = v.reshape(self.k, self.d)
        XV = self._X @ V.T  # (n, k)
        out = (self.loss.L / self.n) * (self._X.T @ XV).T + self.mu * V
        return np.asarray(out).ravel()
