"""Evaluation harness: KNN classification metrics, stratified CV, the
feature-selection success rate, and the imputation benchmark protocol.

The benchmark runs, per (dataset, method, repeat, fold): standardize on the
training fold, impute train and test separately, learn feature weights on
the imputed training fold, select the top-s features, classify with KNN,
and record accuracy and macro-F1. Reports serialize to JSON (records plus
recomputable aggregates) and flat CSV; wall-clock timings stay out of the
JSON so reruns with the same seed are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from . import baselines, imputer, synth, wstage
from .data import (DataError, IncompleteMatrix, LabeledDataset,
                   standardize_apply, standardize_fit)
from .imputer import IwmcConfig, derive_seed

_FOLD_STREAM = 1
_REPEAT_STREAM = 2
_SWEEP_STREAM = 3

CSV_FIELDS = ("dataset", "method", "mechanism", "rate", "fold", "seed",
              "acc", "f1", "success_rate", "wall_ms")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix; rows are true classes, columns predictions."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=int)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DataError("confusion matrix must be square")
        if (counts < 0).any():
            raise DataError("confusion matrix counts must be nonnegative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]


def confusion_matrix(y_true, y_pred, n_classes: int | None = None) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError("label vectors must match")
    if n_classes is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
    counts = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def knn_predict(train_X: np.ndarray, train_y, test_X: np.ndarray, k: int) -> np.ndarray:
    """Majority vote over the k nearest training rows by Euclidean distance.

    Distance ties break toward the smaller training index, vote ties toward
    the smallest class code.
    """
    train_X = np.asarray(train_X, dtype=float)
    test_X = np.asarray(test_X, dtype=float)
    train_y = np.asarray(train_y, dtype=int)
    if len(train_X) == 0:
        raise DataError("empty training set")
    if k > len(train_X):
        raise DataError(f"k = {k} exceeds training size {len(train_X)}")
    dist = cdist(test_X, train_X, metric="euclidean")
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    votes = train_y[order]
    n_classes = int(train_y.max()) + 1
    preds = np.empty(len(test_X), dtype=int)
    for i in range(len(test_X)):
        preds[i] = int(np.bincount(votes[i], minlength=n_classes).argmax())
    return preds


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or len(y_true) == 0:
        raise DataError("label vectors must match and be non-empty")
    return float((y_true == y_pred).mean())


def precision_recall_f1(cm: ConfusionMatrix, positive_class: int):
    """One-vs-rest precision/recall/F1; every 0/0 resolves to 0."""
    c = cm.counts
    tp = int(c[positive_class, positive_class])
    fp = int(c[:, positive_class].sum()) - tp
    fn = int(c[positive_class, :].sum()) - tp
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean one-vs-rest F1 over classes present in y_true."""
    y_true = np.asarray(y_true, dtype=int)
    if len(y_true) == 0:
        raise DataError("empty input")
    cm = confusion_matrix(y_true, y_pred)
    present = np.unique(y_true)
    return float(np.mean([precision_recall_f1(cm, c)[2] for c in present]))


def stratified_kfold(y, k: int, seed: int) -> list[np.ndarray]:
    """k disjoint folds with per-class counts differing by at most one."""
    y = np.asarray(y, dtype=int)
    n = len(y)
    if k < 2:
        raise DataError("need at least 2 folds")
    if k > n:
        raise DataError("more folds than samples")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < k:
            warnings.warn(f"class {c} has fewer members than folds", stacklevel=2)
        rng.shuffle(idx)
        for j, t in enumerate(idx):
            folds[(j + offset) % k].append(int(t))
        offset = (offset + len(idx)) % k
    return [np.array(sorted(f), dtype=int) for f in folds]


def success_rate(w, relevant, top_k: int) -> float:
    """Fraction of known-relevant features among the top_k by weight."""
    w = np.asarray(getattr(w, "w", w), dtype=float)
    relevant = set(int(i) for i in relevant)
    if not relevant:
        raise DataError("empty relevant set")
    if top_k > len(w):
        raise DataError("top_k exceeds feature count")
    top = np.argsort(-w, kind="stable")[:top_k]
    return len(relevant.intersection(top.tolist())) / len(relevant)


@dataclass(frozen=True)
class DatasetSpec:
    """A benchmark input plus the provenance the report keys on."""

    name: str
    data: LabeledDataset
    mechanism: str = "none"
    rate: float = 0.0


@dataclass(frozen=True)
class ProtocolConfig:
    folds: int = 5
    repeats: int = 10
    knn_k: int = 5
    # top-s feature selection; None picks ceil(m / 2) per dataset
    n_select: int | None = None
    success_top_k: int = 10
    seed: int = 0
    jobs: int = 1
    iwmc: IwmcConfig = IwmcConfig()
    baseline: baselines.BaselineConfig = baselines.BaselineConfig()
    ncfs: wstage.NcfsConfig = wstage.NcfsConfig()

    def __post_init__(self):
        if self.folds < 2 or self.repeats < 1 or self.knn_k < 1 or self.jobs < 1:
            raise DataError("invalid protocol configuration")


@dataclass
class BenchmarkReport:
    records: list[dict]
    errors: list[dict]
    config: dict
    aggregates: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate_records(self.records)

    def to_json(self, path=None) -> str:
        payload = {
            "config": self.config,
            "records": [
                {k: v for k, v in rec.items() if k != "wall_ms"}
                for rec in self.records
            ],
            "errors": self.errors,
            "aggregates": self.aggregates,
        }
        text = json.dumps(payload, sort_keys=True, indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
            writer.writeheader()
            for rec in self.records:
                writer.writerow(rec)


def aggregate_records(records: list[dict]) -> list[dict]:
    """Mean and population std per (dataset, method, mechanism, rate)."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        key = (rec["dataset"], rec["method"], rec["mechanism"], rec["rate"])
        groups.setdefault(key, []).append(rec)
    out = []
    for key in sorted(groups):
        recs = groups[key]
        entry = {
            "dataset": key[0], "method": key[1],
            "mechanism": key[2], "rate": key[3],
            "n_records": len(recs),
        }
        for metric in ("acc", "f1", "success_rate"):
            vals = [r[metric] for r in recs if r.get(metric) is not None]
            if vals:
                entry[f"{metric}_mean"] = float(np.mean(vals))
                entry[f"{metric}_std"] = float(np.std(vals))
        out.append(entry)
    return out


def _impute_fold(method: str, train: LabeledDataset, test_X: IncompleteMatrix,
                 cfg: ProtocolConfig, cell_seed: int):
    """Returns (train_imputed, test_imputed, weights)."""
    if method == "iwmc":
        icfg = replace(cfg.iwmc, mstage=replace(cfg.iwmc.mstage, seed=cell_seed))
        result = imputer.fit(train, icfg)
        test_imp = imputer.impute_test(
            test_X, result.weights, replace(icfg.mstage, seed=cell_seed)
        )
        return result.completed, test_imp, result.weights
    bcfg = replace(cfg.baseline, seed=cell_seed)
    train_imp = baselines.impute(method, train.X, bcfg)
    test_imp = baselines.impute(method, test_X, bcfg)
    weights = wstage.learn_weights(train_imp, train.y, cfg.ncfs).w
    return train_imp, test_imp, weights


def _run_cell(spec: DatasetSpec, method: str, repeat: int, cfg: ProtocolConfig):
    """One (dataset, method, repeat): full CV, one record per fold."""
    records, errors = [], []
    repeat_seed = derive_seed(cfg.seed, _REPEAT_STREAM, repeat)
    fold_seed = derive_seed(cfg.seed, _FOLD_STREAM, repeat)
    y = spec.data.y
    m = spec.data.X.n_cols
    n_select = cfg.n_select if cfg.n_select is not None else math.ceil(m / 2)
    n_select = min(n_select, m)
    try:
        folds = stratified_kfold(y, cfg.folds, fold_seed)
    except DataError as exc:
        return [], [{"dataset": spec.name, "method": method, "repeat": repeat,
                     "error": str(exc)}]
    all_idx = np.arange(len(y))
    for fold_id, test_idx in enumerate(folds):
        start = time.perf_counter()
        try:
            train_idx = np.setdiff1d(all_idx, test_idx)
            train = spec.data.take_rows(train_idx)
            test = spec.data.take_rows(test_idx)
            params = standardize_fit(train.X)
            train = LabeledDataset(standardize_apply(train.X, params), train.y,
                                   relevant_features=train.relevant_features)
            test_X = standardize_apply(test.X, params)
            cell_seed = derive_seed(repeat_seed, fold_id)
            train_imp, test_imp, weights = _impute_fold(
                method, train, test_X, cfg, cell_seed
            )
            sel = np.argsort(-weights, kind="stable")[:n_select]
            preds = knn_predict(train_imp[:, sel], train.y, test_imp[:, sel],
                                min(cfg.knn_k, len(train.y)))
            rec = {
                "dataset": spec.name,
                "method": method,
                "mechanism": spec.mechanism,
                "rate": spec.rate,
                "fold": fold_id,
                "seed": repeat_seed,
                "acc": accuracy(test.y, preds),
                "f1": macro_f1(test.y, preds),
                "success_rate": None,
                "wall_ms": (time.perf_counter() - start) * 1000.0,
            }
            if spec.data.relevant_features:
                rec["success_rate"] = success_rate(
                    weights, spec.data.relevant_features,
                    min(cfg.success_top_k, m),
                )
            records.append(rec)
        except DataError as exc:
            errors.append({"dataset": spec.name, "method": method,
                           "repeat": repeat, "fold": fold_id, "error": str(exc)})
            break
    return records, errors


def run_benchmark(datasets: list[DatasetSpec], methods: list[str],
                  cfg: ProtocolConfig) -> BenchmarkReport:
    """Stratified repeated CV over every (dataset, method, repeat) cell."""
    cells = [(spec, method, repeat)
             for spec in datasets
             for method in methods
             for repeat in range(cfg.repeats)]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda c: _run_cell(*c, cfg), cells))
    else:
        results = [_run_cell(*cell, cfg) for cell in cells]
    records, errors = [], []
    for recs, errs in results:
        records.extend(recs)
        errors.extend(errs)
    records.sort(key=lambda r: (r["dataset"], r["method"], r["seed"], r["fold"]))
    errors.sort(key=lambda r: (r["dataset"], r["method"], r.get("repeat", 0)))
    config = {
        "folds": cfg.folds, "repeats": cfg.repeats, "knn_k": cfg.knn_k,
        "n_select": cfg.n_select, "success_top_k": cfg.success_top_k,
        "seed": cfg.seed, "jobs": cfg.jobs,
        "iwmc": asdict(cfg.iwmc), "baseline": asdict(cfg.baseline),
        "ncfs": asdict(cfg.ncfs),
        "f1_average": "macro",
    }
    return BenchmarkReport(records=records, errors=errors, config=config)


DEFAULT_RANK_GRID = (1, 3, 5, 10)
DEFAULT_BETA_GRID = (0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0)


def run_sweep(synth_cfg: synth.SynthConfig, mechanism: str, rate: float,
              n_seeds: int, seed: int,
              rank_grid=DEFAULT_RANK_GRID, beta_grid=DEFAULT_BETA_GRID,
              iwmc_cfg: IwmcConfig = IwmcConfig()) -> list[dict]:
    """Success-rate grid over (rank, beta) on freshly amputed synthetic data.

    The same n_seeds datasets feed every grid cell; each cell reports the
    mean and population std of the top-k success rate.
    """
    if mechanism not in ("mcar", "mnar"):
        raise DataError("mechanism must be 'mcar' or 'mnar'")
    datasets = []
    for i in range(n_seeds):
        ds_seed = derive_seed(seed, _SWEEP_STREAM, i)
        ds = synth.make_classification(replace(synth_cfg, seed=ds_seed))
        ampute = synth.ampute_mcar if mechanism == "mcar" else synth.ampute_mnar
        X = ampute(ds.X.values, rate, ds_seed)
        X = standardize_apply(X, standardize_fit(X))
        datasets.append((LabeledDataset(X, ds.y, relevant_features=ds.relevant_features),
                         ds_seed))
    cells = []
    for r in rank_grid:
        for beta in beta_grid:
            rates = []
            for ds, ds_seed in datasets:
                icfg = replace(
                    iwmc_cfg,
                    mstage=replace(iwmc_cfg.mstage, rank=int(r), beta=float(beta),
                                   seed=ds_seed),
                )
                result = imputer.fit(ds, icfg)
                k = min(len(ds.relevant_features), ds.X.n_cols)
                rates.append(success_rate(result.weights, ds.relevant_features, k))
            cells.append({
                "rank": int(r),
                "beta": float(beta),
                "mechanism": mechanism,
                "rate": rate,
                "n_seeds": n_seeds,
                "success_rate_mean": float(np.mean(rates)),
                "success_rate_std": float(np.std(rates)),
            })
    return cells
