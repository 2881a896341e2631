"""Synthetic labeled datasets and missingness injection.

The generator draws informative features from class-conditional Gaussians
whose means sit at hypercube vertices, pads with pure-noise columns, and
records where the informative columns land after a column shuffle. Two
amputation mechanisms are provided: value-independent MCAR with an exact
masked-cell count, and upper-tail self-masking MNAR on a random half of the
columns with the global rate calibrated by bisection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, IncompleteMatrix, LabeledDataset


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 300
    n_informative: int = 10
    n_noise: int = 0
    n_classes: int = 2
    class_separation: float = 2.0
    noise_variance: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1 or self.n_informative < 1 or self.n_noise < 0:
            raise DataError("sizes must be positive (noise may be zero)")
        if self.n_classes < 2:
            raise DataError("need at least two classes")
        if self.class_separation <= 0 or self.noise_variance <= 0:
            raise DataError("class_separation and noise_variance must be positive")


def _hypercube_vertices(n_classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """n_classes distinct sign vectors in {-1, +1}^dim.

    Two classes get antipodal vertices so every informative column separates
    the classes; further classes draw distinct random vertices.
    """
    if dim <= 30 and n_classes > 2 ** dim:
        raise DataError(f"cannot place {n_classes} classes on a {dim}-cube")
    first = rng.choice([-1.0, 1.0], size=dim)
    out = [first, -first]
    seen = {first.tobytes(), (-first).tobytes()}
    for _ in range(10_000):
        if len(out) >= n_classes:
            return np.array(out[:n_classes])
        v = rng.choice([-1.0, 1.0], size=dim)
        key = v.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(v)
    raise DataError("failed to draw distinct class vertices")


def make_classification(cfg: SynthConfig) -> LabeledDataset:
    """Balanced labels, unit within-class variance on informative columns,
    i.i.d. Gaussian noise columns, shuffled columns with recorded indices."""
    rng = np.random.default_rng(cfg.seed)
    n, d, c = cfg.n_samples, cfg.n_informative, cfg.n_classes
    centers = cfg.class_separation * _hypercube_vertices(c, d, rng)

    counts = np.full(c, n // c)
    counts[: n % c] += 1
    y_sorted = np.repeat(np.arange(c), counts)
    row_perm = rng.permutation(n)
    y = y_sorted[row_perm]

    informative = centers[y] + rng.standard_normal((n, d))
    noise = rng.normal(0.0, np.sqrt(cfg.noise_variance), size=(n, cfg.n_noise))
    X = np.hstack([informative, noise])
    col_perm = rng.permutation(d + cfg.n_noise)
    X = X[:, col_perm]
    relevant = tuple(int(j) for j in np.flatnonzero(col_perm < d))
    return LabeledDataset(IncompleteMatrix.complete(X), y, relevant_features=relevant)


def _repair_columns(mask: np.ndarray, rng: np.random.Generator) -> None:
    """Unmask the lowest masked cell of any fully missing column and mask a
    replacement drawn from columns that can spare an observation."""
    n, m = mask.shape
    for _ in range(100):
        empty = np.flatnonzero(~mask.any(axis=0))
        if len(empty) == 0:
            return
        for col in empty:
            row = int(np.flatnonzero(~mask[:, col])[0])
            mask[row, col] = True
            spare_cols = mask.sum(axis=0) >= 2
            candidates = np.flatnonzero((mask & spare_cols[np.newaxis, :]).ravel())
            candidates = candidates[candidates != row * m + col]
            if len(candidates) == 0:
                raise DataError("missing rate too high to keep every column observed")
            pick = int(rng.choice(candidates))
            mask[pick // m, pick % m] = False
    raise DataError("column repair did not converge; missing rate too high")


def ampute_mcar(X: np.ndarray, rate: float, seed: int) -> IncompleteMatrix:
    """Mask exactly round(rate * n * m) uniformly chosen cells."""
    X = np.asarray(X, dtype=float)
    if not 0 <= rate < 1:
        raise DataError("rate must be in [0, 1)")
    n, m = X.shape
    k = int(round(rate * n * m))
    rng = np.random.default_rng(seed)
    mask = np.ones(n * m, dtype=bool)
    if k > 0:
        mask[rng.choice(n * m, size=k, replace=False)] = False
    mask = mask.reshape(n, m)
    _repair_columns(mask, rng)
    return IncompleteMatrix(X, mask)


def _mnar_mask(X: np.ndarray, cols: np.ndarray, rate_prime: float) -> np.ndarray:
    """Mask cells strictly above each selected column's (1 - rate') quantile."""
    mask = np.ones(X.shape, dtype=bool)
    if rate_prime <= 0:
        return mask
    for col in cols:
        cutoff = np.quantile(X[:, col], 1.0 - rate_prime)
        mask[:, col] = ~(X[:, col] > cutoff)
    return mask


def ampute_mnar(X: np.ndarray, rate: float, seed: int,
                tolerance: float = 0.005) -> IncompleteMatrix:
    """Self-masking MNAR: a random half of the columns hides its upper tail.

    The per-column tail fraction is calibrated by bisection so the achieved
    global missing rate lands within ``tolerance`` of the target.
    """
    X = np.asarray(X, dtype=float)
    if not 0 <= rate < 1:
        raise DataError("rate must be in [0, 1)")
    n, m = X.shape
    rng = np.random.default_rng(seed)
    target = int(round(rate * n * m))
    if target == 0:
        return IncompleteMatrix(X, np.ones((n, m), dtype=bool))
    n_sel = max(1, m // 2)
    cols = np.sort(rng.choice(m, size=n_sel, replace=False))

    def masked_count(rp: float) -> int:
        return int((~_mnar_mask(X, cols, rp)).sum())

    lo, hi = 0.0, (n - 1) / n
    best_rp, best_err = hi, abs(masked_count(hi) - target)
    for _ in range(60):
        mid = (lo + hi) / 2
        cnt = masked_count(mid)
        err = abs(cnt - target)
        if err < best_err:
            best_rp, best_err = mid, err
        if cnt < target:
            lo = mid
        else:
            hi = mid
    if best_err > tolerance * n * m:
        raise DataError("MNAR calibration failed to reach the target rate")
    mask = _mnar_mask(X, cols, best_rp)
    _repair_columns(mask, rng)
    return IncompleteMatrix(X, mask)
