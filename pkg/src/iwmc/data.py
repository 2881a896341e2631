"""Core data model: incomplete matrices, CSV ingestion, observed-only standardization.

Every solver in this package consumes (values, mask) pairs. Missing cells of
``values`` hold a 0.0 placeholder that is never read; algorithms must go
through the mask.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "?", "NaN"})


class DataError(ValueError):
    """Malformed input: bad CSV cell, shape mismatch, fully missing column, ..."""


@dataclass(frozen=True)
class IncompleteMatrix:
    """Dense n x m matrix plus a boolean mask of observed entries.

    Invariants enforced at construction: mask shape equals value shape, every
    column has at least one observed entry, observed entries are finite.
    Missing cells of ``values`` are zeroed so a stray read cannot leak data.
    """

    values: np.ndarray
    observed_mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.observed_mask, dtype=bool)
        if values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {values.shape}")
        if mask.shape != values.shape:
            raise DataError(
                f"mask shape {mask.shape} does not match values shape {values.shape}"
            )
        if values.shape[0] == 0 or values.shape[1] == 0:
            raise DataError("matrix must have at least one row and one column")
        empty = ~mask.any(axis=0)
        if empty.any():
            cols = np.flatnonzero(empty).tolist()
            raise DataError(f"fully missing column(s): {cols}")
        if not np.isfinite(values[mask]).all():
            raise DataError("observed entries must be finite")
        values[~mask] = 0.0
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed_mask", mask)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def is_complete(self) -> bool:
        return bool(self.observed_mask.all())

    def observed(self, row: int, col: int) -> float:
        """Observed accessor: reading a missing cell is an error."""
        if not self.observed_mask[row, col]:
            raise DataError(f"cell ({row}, {col}) is missing")
        return float(self.values[row, col])

    def observed_column(self, col: int) -> np.ndarray:
        m = self.observed_mask[:, col]
        return self.values[m, col]

    def missing_fraction(self) -> float:
        return 1.0 - self.observed_mask.mean()

    def take_rows(self, idx) -> "IncompleteMatrix":
        """Row subset. Raises DataError if a column loses all observations."""
        idx = np.asarray(idx, dtype=int)
        return IncompleteMatrix(self.values[idx], self.observed_mask[idx])

    @staticmethod
    def complete(values: np.ndarray) -> "IncompleteMatrix":
        values = np.asarray(values, dtype=float)
        return IncompleteMatrix(values, np.ones(values.shape, dtype=bool))


@dataclass(frozen=True)
class FeatureWeights:
    """Nonnegative per-feature weight vector."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 1:
            raise DataError("weights must be a 1-D vector")
        if not np.isfinite(w).all():
            raise DataError("weights must be finite")
        if (w < 0).any():
            raise DataError("weights must be nonnegative")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return len(self.w)


def as_weight_vector(w, n_cols: int | None = None) -> np.ndarray:
    """Coerce FeatureWeights or array-like to a validated float vector."""
    arr = np.asarray(getattr(w, "w", w), dtype=float)
    if arr.ndim == 0 and n_cols is not None:
        arr = np.full(n_cols, float(arr))
    if arr.ndim != 1:
        raise DataError("weights must be a 1-D vector")
    if not np.isfinite(arr).all():
        raise DataError("weights must be finite")
    if (arr < 0).any():
        raise DataError("weights must be nonnegative")
    if n_cols is not None and len(arr) != n_cols:
        raise DataError(f"weight length {len(arr)} does not match {n_cols} columns")
    return arr


@dataclass(frozen=True)
class LabeledDataset:
    """Incomplete feature matrix with integer class labels.

    ``relevant_features`` carries synthetic ground truth (indices of the
    informative columns) when known.
    """

    X: IncompleteMatrix
    y: np.ndarray
    relevant_features: tuple[int, ...] | None = None
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=int)
        if y.ndim != 1 or len(y) != self.X.n_rows:
            raise DataError("labels must be one integer per row")
        if (y < 0).any():
            raise DataError("labels must be nonnegative integer codes")
        y.flags.writeable = False
        object.__setattr__(self, "y", y)
        if self.relevant_features is not None:
            rel = tuple(int(i) for i in self.relevant_features)
            if any(i < 0 or i >= self.X.n_cols for i in rel):
                raise DataError("relevant feature index out of range")
            object.__setattr__(self, "relevant_features", rel)
        if self.label_names is not None:
            object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def n_classes(self) -> int:
        return len(np.unique(self.y))

    def take_rows(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(
            self.X.take_rows(idx), self.y[idx],
            relevant_features=self.relevant_features,
            label_names=self.label_names,
        )


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column mean/std computed over observed entries only."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        stds = np.array(self.stds, dtype=float)
        if means.shape != stds.shape or means.ndim != 1:
            raise DataError("means and stds must be matching 1-D vectors")
        if (stds <= 0).any():
            raise DataError("stds must be positive")
        means.flags.writeable = False
        stds.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)


def standardize_fit(X: IncompleteMatrix) -> StandardizationParams:
    """Column means and population stds over observed entries; zero std -> 1."""
    mask = X.observed_mask
    counts = mask.sum(axis=0)
    sums = np.where(mask, X.values, 0.0).sum(axis=0)
    means = sums / counts
    sq = np.where(mask, (X.values - means) ** 2, 0.0).sum(axis=0)
    stds = np.sqrt(sq / counts)
    stds[stds == 0.0] = 1.0
    return StandardizationParams(means, stds)


def standardize_apply(X: IncompleteMatrix, params: StandardizationParams) -> IncompleteMatrix:
    if len(params.means) != X.n_cols:
        raise DataError("standardization parameter length does not match columns")
    vals = (X.values - params.means) / params.stds
    return IncompleteMatrix(np.where(X.observed_mask, vals, 0.0), X.observed_mask)


def compose_xhat(X: IncompleteMatrix, GH: np.ndarray) -> np.ndarray:
    """Observed entries from X, missing entries from GH (cell-exact select)."""
    GH = np.asarray(GH, dtype=float)
    if GH.shape != X.shape:
        raise DataError(f"shape mismatch: {GH.shape} vs {X.shape}")
    return np.where(X.observed_mask, X.values, GH)


def _resolve_label_column(header: list[str], label_column) -> int:
    if isinstance(label_column, int) or (
        isinstance(label_column, str) and label_column.lstrip("-").isdigit()
        and label_column not in header
    ):
        idx = int(label_column)
        if idx < 0:
            idx += len(header)
        if not 0 <= idx < len(header):
            raise DataError(f"label column index {label_column} out of range")
        return idx
    try:
        return header.index(str(label_column))
    except ValueError:
        raise DataError(f"label column {label_column!r} not found in header") from None


def read_csv(path, label_column, missing_tokens=DEFAULT_MISSING_TOKENS) -> LabeledDataset:
    """Read a UTF-8, RFC-4180 CSV with a header row into a LabeledDataset.

    Label strings map to dense integer codes in first-appearance order.
    """
    path = Path(path)
    missing_tokens = frozenset(missing_tokens)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    label_idx = _resolve_label_column(header, label_column)
    feature_names = [h for i, h in enumerate(header) if i != label_idx]

    values, mask, labels = [], [], []
    codes: dict[str, int] = {}
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{rownum}: expected {len(header)} cells, got {len(row)}")
        label = row[label_idx].strip()
        if label in missing_tokens:
            raise DataError(f"{path}:{rownum}: missing label value")
        labels.append(codes.setdefault(label, len(codes)))
        vrow, mrow = [], []
        for i, cell in enumerate(row):
            if i == label_idx:
                continue
            stripped = cell.strip()
            if stripped in missing_tokens:
                vrow.append(0.0)
                mrow.append(False)
            else:
                try:
                    vrow.append(float(stripped))
                except ValueError:
                    raise DataError(
                        f"{path}:{rownum}: unparseable cell {cell!r} in column "
                        f"{feature_names[len(vrow)]!r}"
                    ) from None
                mrow.append(True)
        values.append(vrow)
        mask.append(mrow)
    if not values:
        raise DataError(f"{path}: no data rows")
    X = IncompleteMatrix(np.array(values, dtype=float), np.array(mask, dtype=bool))
    label_names = tuple(sorted(codes, key=codes.get))
    return LabeledDataset(X, np.array(labels, dtype=int), label_names=label_names)


def write_csv(path, X: IncompleteMatrix, y=None, label_names=None,
              feature_names=None, label_header: str = "label") -> None:
    """Write a dataset in the same CSV dialect read_csv accepts.

    Missing cells become empty strings; the label column, if given, goes last.
    """
    path = Path(path)
    m = X.n_cols
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(m)]
    header = list(feature_names) + ([label_header] if y is not None else [])
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(X.n_rows):
            row = [
                repr(float(X.values[i, j])) if X.observed_mask[i, j] else ""
                for j in range(m)
            ]
            if y is not None:
                lab = int(y[i])
                row.append(str(label_names[lab]) if label_names is not None else str(lab))
            writer.writerow(row)
