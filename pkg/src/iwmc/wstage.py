"""Neighborhood-component feature weighting (the W-stage).

Learns a nonnegative per-feature weight vector on a completed dataset by
gradient ascent on the soft leave-one-out classification objective

    F(w) = sum_i p_i - lambda sum_l w_l^2

where p_i is the probability of sample i being referenced by a same-class
sample under an exponential kernel over weighted cityblock distances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import DataError, FeatureWeights, as_weight_vector

# Above this many cells the |x_il - x_jl| tensor is rebuilt per feature block
# instead of being cached whole.
_PAIR_TENSOR_CELL_LIMIT = 200_000_000


@dataclass(frozen=True)
class NcfsConfig:
    lam: float = 1.0
    sigma: float = 1.0
    step_size: float = 0.1
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if min(self.lam, self.sigma, self.step_size, self.tol) <= 0:
            raise DataError("lam, sigma, step_size, tol must all be positive")
        if self.max_iters < 1:
            raise DataError("max_iters must be >= 1")


def weighted_distance(xi, xj, w) -> float:
    """Cityblock distance with squared feature weights."""
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape != xj.shape or xi.ndim != 1:
        raise DataError("vectors must be 1-D and of equal length")
    w = as_weight_vector(w, len(xi))
    return float(np.sum(w ** 2 * np.abs(xi - xj)))


def _pairwise_distances(X: np.ndarray, w2: np.ndarray) -> np.ndarray:
    if (w2 == 0).all():
        return np.zeros((X.shape[0], X.shape[0]))
    nz = w2 > 0
    return cdist(X[:, nz], X[:, nz], metric="cityblock", w=w2[nz])


def _probabilities_from_distances(D: np.ndarray, sigma: float) -> np.ndarray:
    # Shift each row's exponent by its off-diagonal minimum; the minimum maps
    # to kernel value 1, so the normalizer can never underflow to zero.
    D = D.copy()
    np.fill_diagonal(D, np.inf)
    shift = D.min(axis=1)
    K = np.exp(-(D - shift[:, np.newaxis]) / sigma)
    return K / K.sum(axis=1, keepdims=True)


def reference_probabilities(X: np.ndarray, w, sigma: float) -> np.ndarray:
    """Row-stochastic matrix p_ij of picking j as the reference for i (p_ii = 0)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise DataError("need at least two samples")
    w = as_weight_vector(w, X.shape[1])
    if sigma <= 0:
        raise DataError("sigma must be positive")
    return _probabilities_from_distances(_pairwise_distances(X, w ** 2), sigma)


def correct_probabilities(p: np.ndarray, y) -> np.ndarray:
    """Per-sample probability of a same-class reference: p_i = sum_j y_ij p_ij."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y)
    if p.ndim != 2 or p.shape[0] != p.shape[1] or len(y) != p.shape[0]:
        raise DataError("probability matrix must be square and match labels")
    same = y[:, np.newaxis] == y[np.newaxis, :]
    return (p * same).sum(axis=1)


def ncfs_objective(X: np.ndarray, y, w, lam: float, sigma: float) -> float:
    p = reference_probabilities(X, w, sigma)
    w = as_weight_vector(w)
    return float(correct_probabilities(p, y).sum()) - lam * float((w ** 2).sum())


class _PairFeatureDiffs:
    """|x_il - x_jl| flattened over pairs, cached when memory allows."""

    def __init__(self, X: np.ndarray):
        self.X = X
        n, m = X.shape
        self.n, self.m = n, m
        self._cache = None
        if n * n * m <= _PAIR_TENSOR_CELL_LIMIT:
            self._cache = np.abs(
                X[:, np.newaxis, :] - X[np.newaxis, :, :]
            ).reshape(n * n, m)

    def distances(self, w2: np.ndarray) -> np.ndarray:
        if self._cache is not None:
            return (self._cache @ w2).reshape(self.n, self.n)
        return _pairwise_distances(self.X, w2)

    def weighted_pair_sums(self, M: np.ndarray) -> np.ndarray:
        """sum_ij M_ij |x_il - x_jl| for every feature l."""
        if self._cache is not None:
            return M.ravel() @ self._cache
        out = np.empty(self.m)
        for l in range(self.m):
            col = self.X[:, l]
            out[l] = (M * np.abs(col[:, np.newaxis] - col[np.newaxis, :])).sum()
        return out


def _gradient_from_parts(diffs: _PairFeatureDiffs, same: np.ndarray,
                         w: np.ndarray, lam: float, sigma: float):
    P = _probabilities_from_distances(diffs.distances(w ** 2), sigma)
    p_i = (P * same).sum(axis=1)
    F = float(p_i.sum()) - lam * float((w ** 2).sum())
    M = P * (p_i[:, np.newaxis] - same)
    grad = 2.0 * w * (diffs.weighted_pair_sums(M) / sigma - lam)
    return F, grad


def ncfs_gradient(X: np.ndarray, y, w, lam: float, sigma: float) -> np.ndarray:
    """Analytic gradient of the objective with respect to w."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise DataError("need at least two samples")
    w = as_weight_vector(w, X.shape[1])
    y = np.asarray(y)
    same = y[:, np.newaxis] == y[np.newaxis, :]
    _, grad = _gradient_from_parts(_PairFeatureDiffs(X), same, w, lam, sigma)
    return grad


def learn_weights(X: np.ndarray, y, cfg: NcfsConfig,
                  return_trace: bool = False):
    """Gradient ascent from all-ones with backtracking step halving.

    A step is accepted only if the objective does not decrease; the returned
    weights are element-wise absolute values (only w^2 enters the model).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] < 2:
        raise DataError("need at least two samples")
    if len(np.unique(y)) < 2:
        raise DataError("need at least two classes")
    m = X.shape[1]
    same = y[:, np.newaxis] == y[np.newaxis, :]
    diffs = _PairFeatureDiffs(X)

    w = np.ones(m)
    F, grad = _gradient_from_parts(diffs, same, w, cfg.lam, cfg.sigma)
    trace = [F]
    for _ in range(cfg.max_iters):
        step = cfg.step_size
        accepted = False
        for _ in range(40):
            w_new = w + step * grad
            F_new, grad_new = _gradient_from_parts(diffs, same, w_new, cfg.lam, cfg.sigma)
            if F_new >= F - 1e-12:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        delta = abs(F_new - F)
        w, F, grad = w_new, F_new, grad_new
        trace.append(F)
        if delta < cfg.tol:
            break
    weights = FeatureWeights(np.abs(w))
    if return_trace:
        return weights, trace
    return weights
