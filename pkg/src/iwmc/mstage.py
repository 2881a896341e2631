"""Weighted low-rank matrix completion (the M-stage).

Alternates closed-form updates of the factor matrices H (r x m) and G (n x r)
that minimize the feature-weighted, ridge-regularized completion loss

    sum_{(p,q) observed} w_q^2 (G_p H^q - x_pq)^2 + beta (||G||_F^2 + ||H||_F^2)

Two H-update modes exist: the default solves the per-column normal equations
exactly; the literal mode uses the shortcut H^q = w_q^2/(w_q^2+beta) G^T xhat^q,
which coincides with the exact solve only while G has orthonormal columns.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import DataError, IncompleteMatrix, as_weight_vector, compose_xhat


@dataclass(frozen=True)
class MStageConfig:
    rank: int = 5
    beta: float = 20.0
    eta: float = 1e-4
    max_inner_iters: int = 200
    seed: int = 0
    literal_h_update: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise DataError("rank must be >= 1")
        if self.beta <= 0:
            raise DataError("beta must be positive")
        if self.eta <= 0:
            raise DataError("eta must be positive")
        if self.max_inner_iters < 1:
            raise DataError("max_inner_iters must be >= 1")


@dataclass(frozen=True)
class FactorPair:
    G: np.ndarray
    H: np.ndarray

    @property
    def rank(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True)
class CompletionResult:
    completed: np.ndarray
    factors: FactorPair
    iterations: int
    objective_trace: tuple[float, ...]


def init_g(n: int, r: int, seed: int) -> np.ndarray:
    """Seeded Gaussian matrix orthonormalized by QR; G^T G = I_r."""
    if r > n:
        raise DataError(f"rank {r} exceeds row count {n}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return q[:, :r]


def _check_dims(G, H, xhat, w):
    n, r = G.shape
    r2, m = H.shape if H is not None else (r, xhat.shape[1])
    if H is not None and r2 != r:
        raise DataError("factor ranks disagree")
    if xhat.shape != (n, m):
        raise DataError(f"xhat shape {xhat.shape} inconsistent with factors")
    if len(w) != m:
        raise DataError("weight length does not match columns")


def update_h(G: np.ndarray, xhat: np.ndarray, w, beta: float,
             literal: bool = False) -> np.ndarray:
    """Columnwise minimizer of w_q^2 ||G H^q - xhat^q||^2 + beta ||H^q||^2."""
    G = np.asarray(G, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    w = as_weight_vector(w, xhat.shape[1])
    if beta <= 0:
        raise DataError("beta must be positive")
    if G.shape[0] != xhat.shape[0]:
        raise DataError("G rows do not match xhat rows")
    w2 = w ** 2
    B = G.T @ xhat  # r x m
    if literal:
        return B * (w2 / (w2 + beta))
    # (w_q^2 G^T G + beta I)^-1 w_q^2 B^q for every q via one eigendecomposition
    lam, Q = np.linalg.eigh(G.T @ G)
    C = Q.T @ B
    scale = w2[np.newaxis, :] / (w2[np.newaxis, :] * lam[:, np.newaxis] + beta)
    return Q @ (C * scale)


def update_g(H: np.ndarray, xhat: np.ndarray, w, beta: float) -> np.ndarray:
    """Rowwise minimizer of ||G_p H Diag(w) - xhat_p Diag(w)||^2 + beta ||G_p||^2."""
    H = np.asarray(H, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    w = as_weight_vector(w, xhat.shape[1])
    if beta <= 0:
        raise DataError("beta must be positive")
    if H.shape[1] != xhat.shape[1]:
        raise DataError("H columns do not match xhat columns")
    w2 = w ** 2
    r = H.shape[0]
    Hw2 = H * w2  # r x m
    M = Hw2 @ H.T + beta * np.eye(r)  # SPD since beta > 0
    rhs = xhat @ Hw2.T  # n x r
    return cho_solve(cho_factor(M, lower=True), rhs.T).T


def weighted_objective(G: np.ndarray, H: np.ndarray, X: IncompleteMatrix,
                       w, beta: float) -> float:
    """Completion loss over observed entries plus the ridge terms."""
    G = np.asarray(G, dtype=float)
    H = np.asarray(H, dtype=float)
    w = as_weight_vector(w, X.n_cols)
    _check_dims(G, H, X.values, w)
    resid = np.where(X.observed_mask, G @ H - X.values, 0.0)
    fidelity = float(((resid ** 2) * (w ** 2)).sum())
    return fidelity + beta * (float((G ** 2).sum()) + float((H ** 2).sum()))


def surrogate_objective(G: np.ndarray, H: np.ndarray, xhat: np.ndarray,
                        w, beta: float) -> float:
    """The alternating updates minimize this with xhat held fixed."""
    w = as_weight_vector(w, xhat.shape[1])
    resid = (np.asarray(G) @ np.asarray(H) - xhat)
    return float(((resid ** 2) * (w ** 2)).sum()) + beta * (
        float((np.asarray(G) ** 2).sum()) + float((np.asarray(H) ** 2).sum())
    )


def complete(X: IncompleteMatrix, w, cfg: MStageConfig) -> CompletionResult:
    """Alternate H/G updates until the Frobenius-norm criterion holds.

    Returns the composition of X's observed entries with the final low-rank
    reconstruction on the missing entries; observed entries are bit-preserved.
    """
    n, m = X.shape
    w = as_weight_vector(w, m)
    r = cfg.rank
    if r > min(n, m):
        warnings.warn(
            f"rank {r} clamped to min(n, m) = {min(n, m)}", stacklevel=2
        )
        r = min(n, m)
    G = init_g(n, r, cfg.seed)
    xhat = np.where(X.observed_mask, X.values, 0.0)
    trace: list[float] = []
    prev_h2 = prev_g2 = None
    iterations = 0
    for _ in range(cfg.max_inner_iters):
        iterations += 1
        H = update_h(G, xhat, w, cfg.beta, literal=cfg.literal_h_update)
        G = update_g(H, xhat, w, cfg.beta)
        xhat = compose_xhat(X, G @ H)
        obj = weighted_objective(G, H, X, w, cfg.beta)
        if not np.isfinite(obj):
            raise DataError("M-stage diverged to non-finite objective")
        trace.append(obj)
        h2 = float((H ** 2).sum())
        g2 = float((G ** 2).sum())
        if prev_h2 is not None and abs(h2 - prev_h2) < cfg.eta and abs(g2 - prev_g2) < cfg.eta:
            break
        prev_h2, prev_g2 = h2, g2
    return CompletionResult(
        completed=xhat,
        factors=FactorPair(G=G, H=H),
        iterations=iterations,
        objective_trace=tuple(trace),
    )
