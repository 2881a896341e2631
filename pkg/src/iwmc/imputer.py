"""Outer alternation of the completion stage and the weighting stage.

Starting from all-ones weights, each outer round completes the matrix with
the current weights and relearns the weights on the completed matrix; the
loop stops once zeta = ||w||^2 stabilizes. Test matrices are imputed with
the fitted weights frozen.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import mstage, wstage
from .data import DataError, IncompleteMatrix, LabeledDataset, as_weight_vector

_MSTAGE_STREAM = 0


def derive_seed(*parts: int) -> int:
    """Deterministic sub-seed from an ordered tuple of integer keys."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class IwmcConfig:
    mstage: mstage.MStageConfig = mstage.MStageConfig()
    ncfs: wstage.NcfsConfig = wstage.NcfsConfig()
    delta: float = 1e-3
    max_outer_iters: int = 20

    def __post_init__(self):
        if self.delta <= 0:
            raise DataError("delta must be positive")
        if self.max_outer_iters < 1:
            raise DataError("max_outer_iters must be >= 1")


@dataclass(frozen=True)
class IwmcResult:
    weights: np.ndarray
    completed: np.ndarray
    zeta_trace: tuple[float, ...]
    outer_iterations: int
    converged: bool
    # weights and seed that produced `completed` (the final completion runs
    # one round before the final weight update)
    completion_weights: np.ndarray
    completion_seed: int


def fit(data: LabeledDataset, cfg: IwmcConfig = IwmcConfig()) -> IwmcResult:
    """Alternate completion and weight learning until |zeta_v - zeta_{v-1}| < delta."""
    if data.n_classes < 2:
        raise DataError("need at least two classes")
    m = data.X.n_cols
    w = np.ones(m)
    zeta_prev = -np.inf
    zeta_trace: list[float] = []
    converged = False
    completion_weights = w
    completion_seed = cfg.mstage.seed
    completed = None
    outer = 0
    for v in range(1, cfg.max_outer_iters + 1):
        outer = v
        completion_seed = derive_seed(cfg.mstage.seed, _MSTAGE_STREAM, v)
        completion_weights = w
        mres = mstage.complete(
            data.X, w, replace(cfg.mstage, seed=completion_seed)
        )
        completed = mres.completed
        w = wstage.learn_weights(completed, data.y, cfg.ncfs).w
        zeta = float(np.sum(w ** 2))
        zeta_trace.append(zeta)
        if abs(zeta - zeta_prev) < cfg.delta:
            converged = True
            break
        zeta_prev = zeta
    return IwmcResult(
        weights=w,
        completed=completed,
        zeta_trace=tuple(zeta_trace),
        outer_iterations=outer,
        converged=converged,
        completion_weights=completion_weights,
        completion_seed=completion_seed,
    )


def impute_test(X_test: IncompleteMatrix, w, cfg: mstage.MStageConfig) -> np.ndarray:
    """Complete an unseen matrix with frozen feature weights."""
    w = as_weight_vector(w, X_test.n_cols)
    return mstage.complete(X_test, w, cfg).completed
