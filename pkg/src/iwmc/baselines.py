"""Five comparison imputers: mean, partial-distance KNN, Gaussian EM,
iterative truncated SVD, and soft-thresholded SVD.

Every imputer maps an IncompleteMatrix to a complete ndarray and preserves
observed entries exactly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import DataError, IncompleteMatrix, compose_xhat

METHOD_NAMES = ("mean", "knn", "em", "isvd", "soft")


@dataclass(frozen=True)
class BaselineConfig:
    knn_k: int = 5
    em_max_iters: int = 100
    em_tol: float = 1e-4
    em_ridge: float = 1e-3
    isvd_rank: int = 5
    isvd_tol: float = 1e-4
    isvd_max_iters: int = 100
    soft_shrinkage: float = 0.2
    soft_tol: float = 1e-4
    soft_max_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.knn_k < 1 or self.isvd_rank < 1:
            raise DataError("neighbor count and ranks must be >= 1")
        if min(self.em_tol, self.em_ridge, self.isvd_tol, self.soft_tol) <= 0:
            raise DataError("tolerances and ridge must be positive")
        if not 0 < self.soft_shrinkage <= 1:
            raise DataError("soft_shrinkage must be in (0, 1]")


def _column_means(X: IncompleteMatrix) -> np.ndarray:
    mask = X.observed_mask
    return np.where(mask, X.values, 0.0).sum(axis=0) / mask.sum(axis=0)


def mean_impute(X: IncompleteMatrix) -> np.ndarray:
    """Missing cells take the observed mean of their column."""
    return compose_xhat(X, np.broadcast_to(_column_means(X), X.shape))


def knn_impute(X: IncompleteMatrix, k: int) -> np.ndarray:
    """Partial-distance KNN: neighbors ranked by mean squared difference over
    mutually observed features; a missing cell takes the mean of the feature
    over the k nearest neighbors that observe it, falling back to the column
    mean when none does. Ties break toward the smaller row index."""
    if k < 1:
        raise DataError("k must be >= 1")
    if X.n_rows < 2:
        raise DataError("need at least two rows")
    vals, mask = X.values, X.observed_mask
    n = X.n_rows
    col_means = _column_means(X)
    out = vals.copy()
    for i in range(n):
        miss = ~mask[i]
        if not miss.any():
            continue
        mutual = mask[i] & mask
        counts = mutual.sum(axis=1)
        sq = ((vals[i] - vals) ** 2) * mutual
        with np.errstate(invalid="ignore"):
            dist = np.where(counts > 0, sq.sum(axis=1) / np.maximum(counts, 1), np.inf)
        dist[i] = np.inf
        order = np.argsort(dist, kind="stable")
        neighbors = order[np.isfinite(dist[order])][:k]
        for q in np.flatnonzero(miss):
            donors = neighbors[mask[neighbors, q]]
            out[i, q] = vals[donors, q].mean() if len(donors) else col_means[q]
    return out


def em_impute(X: IncompleteMatrix, cfg: BaselineConfig = BaselineConfig()) -> np.ndarray:
    """Single multivariate-Gaussian EM: each row's missing block is replaced
    by its conditional mean given the observed block; the covariance carries
    a ridge so the conditional systems stay solvable."""
    n, m = X.shape
    if n <= m:
        warnings.warn("EM imputation with n <= m columns is poorly conditioned",
                      stacklevel=2)
    vals, mask = X.values, X.observed_mask
    cur = compose_xhat(X, np.broadcast_to(_column_means(X), X.shape))
    incomplete_rows = np.flatnonzero(~mask.all(axis=1))
    for _ in range(cfg.em_max_iters):
        mu = cur.mean(axis=0)
        centered = cur - mu
        cov = centered.T @ centered / n + cfg.em_ridge * np.eye(m)
        new = cur.copy()
        for i in incomplete_rows:
            obs = mask[i]
            mis = ~obs
            if obs.any():
                sol = np.linalg.solve(cov[np.ix_(obs, obs)], vals[i, obs] - mu[obs])
                new[i, mis] = mu[mis] + cov[np.ix_(mis, obs)] @ sol
            else:
                new[i, mis] = mu[mis]
        if not np.isfinite(new).all():
            raise DataError("EM imputation diverged to non-finite values")
        change = np.abs(new - cur)[~mask].max() if (~mask).any() else 0.0
        cur = new
        if change < cfg.em_tol:
            break
    return cur


def _truncated_svd(A: np.ndarray, rank: int) -> np.ndarray:
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return (U[:, :rank] * s[:rank]) @ Vt[:rank]


def isvd_impute(X: IncompleteMatrix, u: int,
                cfg: BaselineConfig = BaselineConfig()) -> np.ndarray:
    """Iterative rank-u SVD refill: start from column means, repeatedly
    replace the missing cells with the truncated-SVD reconstruction."""
    n, m = X.shape
    max_u = min(n, m) - 1
    if max_u < 1:
        max_u = 1
    if u > max_u:
        warnings.warn(f"isvd rank {u} clamped to {max_u}", stacklevel=2)
        u = max_u
    cur = compose_xhat(X, np.broadcast_to(_column_means(X), X.shape))
    miss = ~X.observed_mask
    for _ in range(cfg.isvd_max_iters):
        if not np.isfinite(cur).all():
            raise DataError("iterative SVD diverged to non-finite values")
        recon = _truncated_svd(cur, u)
        new = compose_xhat(X, recon)
        change = float(np.sqrt(((new - cur)[miss] ** 2).sum())) if miss.any() else 0.0
        cur = new
        if change < cfg.isvd_tol:
            break
    return cur


def soft_impute(X: IncompleteMatrix, cfg: BaselineConfig = BaselineConfig()) -> np.ndarray:
    """Soft-thresholded SVD iteration at a fixed shrinkage level.

    The threshold is soft_shrinkage times the top singular value of the
    zero-filled composition; the final output recomposes the observed
    entries so they are preserved exactly."""
    vals, mask = X.values, X.observed_mask
    z0 = np.where(mask, vals, 0.0)
    tau = cfg.soft_shrinkage * float(np.linalg.svd(z0, compute_uv=False)[0])
    M = np.zeros(X.shape)
    for _ in range(cfg.soft_max_iters):
        Z = compose_xhat(X, M)
        U, s, Vt = np.linalg.svd(Z, full_matrices=False)
        M_new = (U * np.maximum(s - tau, 0.0)) @ Vt
        if not np.isfinite(M_new).all():
            raise DataError("soft impute diverged to non-finite values")
        change = float(np.sqrt(((M_new - M) ** 2).sum()))
        M = M_new
        if change < cfg.soft_tol:
            break
    return compose_xhat(X, M)


def impute(method: str, X: IncompleteMatrix,
           cfg: BaselineConfig = BaselineConfig()) -> np.ndarray:
    """Dispatch by method name (one of METHOD_NAMES)."""
    if method == "mean":
        return mean_impute(X)
    if method == "knn":
        return knn_impute(X, cfg.knn_k)
    if method == "em":
        return em_impute(X, cfg)
    if method == "isvd":
        return isvd_impute(X, cfg.isvd_rank, cfg)
    if method == "soft":
        return soft_impute(X, cfg)
    raise DataError(f"unknown baseline method {method!r}")
