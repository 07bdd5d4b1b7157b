"""RBF-kernel support vector machines with a small SMO-style dual solver.

Two model families: a nu-parameterized one-class model used for
per-protocol outlier filtering, and a soft-margin one-vs-all classifier
used for the compressed/encrypted/cleartext detector. The solver picks the
maximal violating pair each iteration, keeps the kernel in a bounded
cache, and is fully deterministic (no randomness, fixed tie-breaking via
argmax order).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-4
_ETA_FLOOR = 1e-12


def rbf_kernel(x: np.ndarray, z: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||x - z||^2) for all row pairs; (len(x), len(z))."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(z * z, axis=1)[None, :]
        - 2.0 * (x @ z.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


class _KernelCache:
    """Row cache over the training kernel matrix, bounded in bytes."""

    def __init__(self, x: np.ndarray, gamma: float, cache_mb: int = 256):
        self.x = np.asarray(x, dtype=np.float64)
        self.gamma = gamma
        self.n = self.x.shape[0]
        self.sq_norms = np.sum(self.x * self.x, axis=1)
        budget = cache_mb * (1 << 20)
        if self.n * self.n * 8 <= budget:
            self.full = rbf_kernel(self.x, self.x, gamma)
            self.rows = None
        else:
            self.full = None
            self.rows = {}
            self.capacity = max(2, budget // (self.n * 8))
            self.order: List[int] = []

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        cached = self.rows.get(i)
        if cached is not None:
            return cached
        sq = self.sq_norms + self.sq_norms[i] - 2.0 * (self.x @ self.x[i])
        np.maximum(sq, 0.0, out=sq)
        row = np.exp(-self.gamma * sq)
        if len(self.order) >= self.capacity:
            evict = self.order.pop(0)
            del self.rows[evict]
        self.rows[i] = row
        self.order.append(i)
        return row

    def diag(self) -> np.ndarray:
        return np.ones(self.n)  # RBF: K(x, x) = 1


@dataclass
class OneClassModel:
    """nu-formulation one-class SVM; outlier iff decision(x) < 0."""

    gamma: float
    nu: float
    rho: float
    support_vectors: np.ndarray
    coefficients: np.ndarray
    train_outlier_fraction: float = 0.0

    def decision(self, x: np.ndarray) -> np.ndarray:
        k = rbf_kernel(np.atleast_2d(x), self.support_vectors, self.gamma)
        return k @ self.coefficients - self.rho

    def is_outlier(self, x: np.ndarray) -> np.ndarray:
        return self.decision(x) < 0.0


def train_one_class(
    x: np.ndarray,
    gamma: float,
    nu: float,
    tol: float = DEFAULT_TOL,
    cache_mb: int = 256,
    max_iter: int = 0,
) -> OneClassModel:
    """Solve the one-class dual: min 1/2 a'Ka, 0 <= a_i <= 1, sum a = nu*n."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    if n < 1:
        raise ValueError("need at least one training sample")
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu must be in (0, 1], got {nu}")
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    cache = _KernelCache(x, gamma, cache_mb)
    alpha = np.zeros(n)
    n_bound = int(nu * n)
    alpha[:n_bound] = 1.0
    if n_bound < n:
        alpha[n_bound] = nu * n - n_bound

    grad = np.zeros(n)
    for i in np.nonzero(alpha > 0.0)[0]:
        grad += alpha[i] * cache.row(i)

    if max_iter <= 0:
        max_iter = max(20000, 200 * n)
    iters = 0
    while iters < max_iter:
        iters += 1
        up = alpha < 1.0 - 1e-12
        low = alpha > 1e-12
        gi = np.where(up, grad, np.inf)
        gj = np.where(low, grad, -np.inf)
        i = int(np.argmin(gi))
        j = int(np.argmax(gj))
        if gj[j] - gi[i] <= tol:
            break
        row_i = cache.row(i)
        row_j = cache.row(j)
        eta = max(2.0 - 2.0 * row_i[j], _ETA_FLOOR)
        delta = min((grad[j] - grad[i]) / eta, 1.0 - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        grad += delta * (row_i - row_j)
    else:
        log.warning("one-class solver hit iteration cap (%d)", max_iter)

    # Any rho in the KKT interval is optimal at tolerance; the smallest
    # gradient over non-bound points keeps every non-bound training sample
    # on the inlier side, so training outliers are confined to the
    # at-bound multipliers (at most floor(nu*n) of them).
    non_bound = alpha < 1.0 - 1e-9
    if non_bound.any():
        rho = float(grad[non_bound].min())
    else:
        rho = float(grad.max())

    sv_mask = alpha > 1e-10
    model = OneClassModel(
        gamma=gamma,
        nu=nu,
        rho=rho,
        support_vectors=x[sv_mask].copy(),
        coefficients=alpha[sv_mask].copy(),
    )
    model.train_outlier_fraction = float(np.mean(model.decision(x) < 0.0))
    return model


@dataclass
class _BinaryMachine:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for support vectors
    intercept: float

    def decision(self, x: np.ndarray, gamma: float) -> np.ndarray:
        k = rbf_kernel(np.atleast_2d(x), self.support_vectors, gamma)
        return k @ self.dual_coef + self.intercept


def _solve_binary(
    cache: _KernelCache,
    y: np.ndarray,
    c: float,
    tol: float,
    max_iter: int,
) -> tuple:
    """C-SVC dual via maximal violating pair selection; returns (alpha, b)."""
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a at a = 0
    pos = y > 0

    iters = 0
    while iters < max_iter:
        iters += 1
        up = np.where(pos, alpha < c - 1e-12, alpha > 1e-12)
        low = np.where(pos, alpha > 1e-12, alpha < c - 1e-12)
        v = -y * grad
        vi = np.where(up, v, -np.inf)
        vj = np.where(low, v, np.inf)
        i = int(np.argmax(vi))
        j = int(np.argmin(vj))
        if vi[i] - vj[j] <= tol:
            break
        row_i = cache.row(i)
        row_j = cache.row(j)
        eta = max(2.0 - 2.0 * row_i[j], _ETA_FLOOR)
        d = (vi[i] - vj[j]) / eta
        # keep both multipliers inside [0, C]
        d = min(d, c - alpha[i] if y[i] > 0 else alpha[i])
        d = min(d, alpha[j] if y[j] > 0 else c - alpha[j])
        alpha[i] += y[i] * d
        alpha[j] -= y[j] * d
        grad += d * y * (row_i - row_j)
    else:
        log.warning("margin solver hit iteration cap (%d)", max_iter)

    free = (alpha > 1e-9) & (alpha < c - 1e-9)
    v = -y * grad
    if free.any():
        b = float(v[free].mean())
    else:
        up = np.where(pos, alpha < c - 1e-12, alpha > 1e-12)
        low = np.where(pos, alpha > 1e-12, alpha < c - 1e-12)
        hi = float(np.where(up, v, -np.inf).max())
        lo = float(np.where(low, v, np.inf).min())
        b = (hi + lo) / 2.0
    return alpha, b


@dataclass
class MarginClassifier:
    """One-vs-all soft-margin RBF classifier; predicts argmax decision."""

    gamma: float
    c: float
    classes: List[str]
    machines: List[_BinaryMachine] = field(default_factory=list)

    def decision_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.stack([m.decision(x, self.gamma) for m in self.machines], axis=1)

    def predict(self, x: np.ndarray) -> np.ndarray:
        scores = self.decision_matrix(x)
        idx = np.argmax(scores, axis=1)  # ties resolve to the lowest index
        return np.array([self.classes[i] for i in idx])


def train_margin(
    x: np.ndarray,
    labels: Sequence[str],
    gamma: float,
    c: float,
    tol: float = DEFAULT_TOL,
    cache_mb: int = 256,
    max_iter: int = 0,
) -> MarginClassifier:
    """Train one binary machine per distinct label (one-vs-all)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.asarray([str(l) for l in labels])
    if x.shape[0] != labels.size:
        raise ValueError("sample/label count mismatch")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValueError(f"need at least two classes, got {classes}")
    if gamma <= 0.0 or c <= 0.0:
        raise ValueError("gamma and C must be positive")

    cache = _KernelCache(x, gamma, cache_mb)
    if max_iter <= 0:
        max_iter = max(50000, 400 * x.shape[0])
    clf = MarginClassifier(gamma=gamma, c=c, classes=classes)
    for cls in classes:
        y = np.where(labels == cls, 1.0, -1.0)
        alpha, b = _solve_binary(cache, y, c, tol, max_iter)
        sv_mask = alpha > 1e-10
        clf.machines.append(
            _BinaryMachine(
                support_vectors=x[sv_mask].copy(),
                dual_coef=(alpha * y)[sv_mask].copy(),
                intercept=b,
            )
        )
    return clf
