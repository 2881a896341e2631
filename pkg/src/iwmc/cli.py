"""Command-line surface: generate, ampute, impute, benchmark, sweep, fetch.

Every command echoes its effective configuration into a metadata JSON next
to its outputs, and all randomness flows from a single --seed flag.
Config precedence: CLI flag > --config file > built-in default.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import urllib.request
from pathlib import Path

from . import baselines, evaluation, imputer, mstage, synth, wstage
from .data import (DEFAULT_MISSING_TOKENS, DataError, IncompleteMatrix,
                   LabeledDataset, read_csv, write_csv)


class CliError(Exception):
    pass


def _write_json(path: Path, payload: dict) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """flag > config file > default; unknown config-file keys are rejected."""
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file: {exc}") from exc
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _read_unlabeled(csv_path, missing_tokens) -> LabeledDataset:
    """Parse a feature-only CSV by appending a constant pseudo-label column."""
    import io

    text = Path(csv_path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise CliError(f"{csv_path}: empty file")
    tmp = io.StringIO()
    writer = csv.writer(tmp)
    writer.writerow(rows[0] + ["__label__"])
    for row in rows[1:]:
        writer.writerow(row + ["0"])
    import tempfile

    with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False,
                                     encoding="utf-8", newline="") as fh:
        fh.write(tmp.getvalue())
        tmp_path = fh.name
    try:
        return read_csv(tmp_path, "__label__", missing_tokens)
    finally:
        Path(tmp_path).unlink(missing_ok=True)


def _load_dataset(path_str: str, label_column, missing_tokens):
    """A dataset is either a CSV file or a directory holding data.csv plus
    metadata.json; returns (LabeledDataset, metadata dict, name)."""
    path = Path(path_str)
    meta: dict = {}
    if path.is_dir():
        csv_path = path / "data.csv"
        meta_path = path / "metadata.json"
        if meta_path.exists():
            with meta_path.open(encoding="utf-8") as fh:
                meta = json.load(fh)
        label_column = meta.get("label_column", label_column)
        name = path.name
    else:
        csv_path = path
        name = path.stem
    if label_column == "none":
        ds = _read_unlabeled(csv_path, missing_tokens)
    else:
        ds = read_csv(csv_path, label_column, missing_tokens)
    rel = meta.get("relevant_features")
    if rel is not None:
        ds = LabeledDataset(ds.X, ds.y, relevant_features=tuple(rel),
                            label_names=ds.label_names)
    return ds, meta, name


def _missing_tokens(args) -> frozenset:
    tokens = getattr(args, "missing_tokens", None)
    if tokens is None:
        return DEFAULT_MISSING_TOKENS
    return frozenset(tokens.split(","))


def cmd_generate(args) -> int:
    defaults = {"samples": 300, "informative": 10, "noise": 0, "classes": 2,
                "sep": 2.0, "noise_var": 5.0, "seed": 0}
    cfg = _merge_config(args, defaults)
    try:
        scfg = synth.SynthConfig(
            n_samples=cfg["samples"], n_informative=cfg["informative"],
            n_noise=cfg["noise"], n_classes=cfg["classes"],
            class_separation=cfg["sep"], noise_variance=cfg["noise_var"],
            seed=cfg["seed"],
        )
    except DataError as exc:
        raise CliError(f"invalid config: {exc}") from exc
    ds = synth.make_classification(scfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "data.csv", ds.X, y=ds.y, label_names=ds.label_names)
    _write_json(out / "metadata.json", {
        "command": "generate",
        "config": cfg,
        "label_column": "label",
        "n_rows": ds.X.n_rows,
        "n_cols": ds.X.n_cols,
        "relevant_features": list(ds.relevant_features),
        "seed": cfg["seed"],
    })
    return 0


def cmd_ampute(args) -> int:
    defaults = {"mechanism": "mcar", "rate": 0.1, "seed": 0,
                "label_column": "label"}
    cfg = _merge_config(args, defaults)
    if cfg["mechanism"] not in ("mcar", "mnar"):
        raise CliError("mechanism must be 'mcar' or 'mnar'")
    if not 0 <= cfg["rate"] < 1:
        raise CliError("rate must be in [0, 1)")
    ds, meta, _ = _load_dataset(args.input, cfg["label_column"], _missing_tokens(args))
    if not ds.X.is_complete():
        raise CliError("input dataset already has missing values")
    ampute = synth.ampute_mcar if cfg["mechanism"] == "mcar" else synth.ampute_mnar
    try:
        X = ampute(ds.X.values, cfg["rate"], cfg["seed"])
    except DataError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "data.csv", X, y=ds.y, label_names=ds.label_names)
    _write_json(out / "metadata.json", {
        "command": "ampute",
        "config": cfg,
        "label_column": cfg["label_column"],
        "mechanism": cfg["mechanism"],
        "rate": cfg["rate"],
        "achieved_rate": X.missing_fraction(),
        "relevant_features": meta.get("relevant_features"),
        "seed": cfg["seed"],
    })
    return 0


def _solver_configs(cfg: dict):
    mcfg = mstage.MStageConfig(rank=cfg["rank"], beta=cfg["beta"], eta=cfg["eta"],
                               max_inner_iters=cfg["max_inner_iters"],
                               seed=cfg["seed"])
    ncfg = wstage.NcfsConfig(lam=cfg["lam"], sigma=cfg["sigma"], seed=cfg["seed"])
    icfg = imputer.IwmcConfig(mstage=mcfg, ncfs=ncfg, delta=cfg["delta"],
                              max_outer_iters=cfg["max_outer_iters"])
    bcfg = baselines.BaselineConfig(knn_k=cfg["knn_k"], isvd_rank=cfg["rank"],
                                    seed=cfg["seed"])
    return mcfg, ncfg, icfg, bcfg


_SOLVER_DEFAULTS = {
    "rank": 5, "beta": 20.0, "eta": 1e-4, "max_inner_iters": 200,
    "lam": 1.0, "sigma": 1.0, "delta": 1e-3, "max_outer_iters": 20,
    "knn_k": 5, "seed": 0,
}


def cmd_impute(args) -> int:
    defaults = dict(_SOLVER_DEFAULTS, method="mean", label_column="label")
    cfg = _merge_config(args, defaults)
    method = cfg["method"]
    if method not in ("iwmc",) + baselines.METHOD_NAMES:
        raise CliError(f"unknown method {method!r}")
    ds, _, _ = _load_dataset(args.input, cfg["label_column"], _missing_tokens(args))
    _, _, icfg, bcfg = _solver_configs(cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"command": "impute", "config": cfg, "method": method, "seed": cfg["seed"]}
    try:
        if method == "iwmc":
            if ds.n_classes < 2:
                raise CliError("iwmc requires labels with at least two classes")
            result = imputer.fit(ds, icfg)
            completed = result.completed
            with (out / "weights.csv").open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["feature", "weight"])
                for i, wv in enumerate(result.weights):
                    writer.writerow([f"f{i}", repr(float(wv))])
            _write_json(out / "zeta_trace.json", {
                "zeta_trace": list(result.zeta_trace),
                "outer_iterations": result.outer_iterations,
                "converged": result.converged,
            })
            meta["converged"] = result.converged
        else:
            completed = baselines.impute(method, ds.X, bcfg)
    except DataError as exc:
        raise CliError(str(exc)) from exc
    write_csv(out / "completed.csv", IncompleteMatrix.complete(completed),
              y=ds.y, label_names=ds.label_names)
    _write_json(out / "metadata.json", meta)
    return 0


def cmd_benchmark(args) -> int:
    defaults = dict(_SOLVER_DEFAULTS, methods="iwmc,mean,knn,em,isvd,soft",
                    repeats=10, folds=5, select=None, success_top_k=10,
                    jobs=1, label_column="label")
    cfg = _merge_config(args, defaults)
    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    for m in methods:
        if m not in ("iwmc",) + baselines.METHOD_NAMES:
            raise CliError(f"unknown method {m!r}")
    specs = []
    for path in args.inputs:
        ds, meta, name = _load_dataset(path, cfg["label_column"], _missing_tokens(args))
        specs.append(evaluation.DatasetSpec(
            name=name, data=ds,
            mechanism=meta.get("mechanism", "none"),
            rate=float(meta.get("rate", 0.0)),
        ))
    _, ncfg, icfg, bcfg = _solver_configs(cfg)
    proto = evaluation.ProtocolConfig(
        folds=cfg["folds"], repeats=cfg["repeats"], knn_k=cfg["knn_k"],
        n_select=cfg["select"], success_top_k=cfg["success_top_k"],
        seed=cfg["seed"], jobs=cfg["jobs"], iwmc=icfg, baseline=bcfg, ncfs=ncfg,
    )
    report = evaluation.run_benchmark(specs, methods, proto)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    report.config["inputs"] = [str(p) for p in args.inputs]
    report.to_json(out / "report.json")
    report.to_csv(out / "records.csv")
    if report.errors and not report.records:
        raise CliError("every benchmark cell failed; see report.json errors")
    return 0


def _parse_grid(text: str, cast):
    try:
        return tuple(cast(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise CliError(f"bad grid {text!r}") from exc


def cmd_sweep(args) -> int:
    defaults = dict(_SOLVER_DEFAULTS, samples=300, informative=10, noise=100,
                    classes=2, sep=2.0, noise_var=5.0, mechanism="mcar",
                    rate=0.05, seeds=10,
                    r_grid="1,3,5,10", beta_grid="0.25,0.5,1,2,5,10,20,30")
    cfg = _merge_config(args, defaults)
    rank_grid = _parse_grid(cfg["r_grid"], int)
    beta_grid = _parse_grid(cfg["beta_grid"], float)
    _, _, icfg, _ = _solver_configs(cfg)
    try:
        scfg = synth.SynthConfig(
            n_samples=cfg["samples"], n_informative=cfg["informative"],
            n_noise=cfg["noise"], n_classes=cfg["classes"],
            class_separation=cfg["sep"], noise_variance=cfg["noise_var"],
            seed=cfg["seed"],
        )
        cells = evaluation.run_sweep(
            scfg, cfg["mechanism"], cfg["rate"], cfg["seeds"], cfg["seed"],
            rank_grid=rank_grid, beta_grid=beta_grid, iwmc_cfg=icfg,
        )
    except DataError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "sweep.json", {"config": cfg, "cells": cells})
    with (out / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "rank", "beta", "mechanism", "rate", "n_seeds",
            "success_rate_mean", "success_rate_std",
        ])
        writer.writeheader()
        writer.writerows(cells)
    return 0


def cmd_fetch(args) -> int:
    try:
        with urllib.request.urlopen(args.url) as resp:
            blob = resp.read()
    except OSError as exc:
        raise CliError(f"download failed: {exc}") from exc
    digest = hashlib.sha256(blob).hexdigest()
    if args.sha256 and digest != args.sha256.lower():
        raise CliError(f"checksum mismatch: expected {args.sha256}, got {digest}")
    Path(args.output).write_bytes(blob)
    return 0


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rank", type=int, help="completion rank r (default 5)")
    p.add_argument("--beta", type=float, help="ridge coefficient (default 20)")
    p.add_argument("--eta", type=float, help="inner convergence threshold (default 1e-4)")
    p.add_argument("--max-inner-iters", dest="max_inner_iters", type=int,
                   help="inner iteration cap (default 200)")
    p.add_argument("--lam", type=float, help="NCFS regularization (default 1)")
    p.add_argument("--sigma", type=float, help="NCFS kernel width (default 1)")
    p.add_argument("--delta", type=float, help="outer convergence threshold (default 1e-3)")
    p.add_argument("--max-outer-iters", dest="max_outer_iters", type=int,
                   help="outer iteration cap (default 20)")
    p.add_argument("--knn-k", dest="knn_k", type=int, help="neighbor count (default 5)")
    p.add_argument("--seed", type=int, help="master RNG seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iwmc",
        description="Feature-importance-aware missing value imputation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic labeled dataset")
    p.add_argument("--samples", type=int, help="rows (default 300)")
    p.add_argument("--informative", type=int, help="informative features (default 10)")
    p.add_argument("--noise", type=int, help="noise features (default 0)")
    p.add_argument("--classes", type=int, help="class count (default 2)")
    p.add_argument("--sep", type=float, help="class separation (default 2.0)")
    p.add_argument("--noise-var", dest="noise_var", type=float,
                   help="noise feature variance (default 5.0)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ampute", help="inject missing values into a complete dataset")
    p.add_argument("--input", required=True, help="dataset directory or CSV")
    p.add_argument("--mechanism", choices=["mcar", "mnar"])
    p.add_argument("--rate", type=float, help="target missing fraction in [0, 1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--missing-tokens", dest="missing_tokens",
                   help="comma-separated missing tokens")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ampute)

    p = sub.add_parser("impute", help="complete a dataset with one method")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=("iwmc",) + baselines.METHOD_NAMES)
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--missing-tokens", dest="missing_tokens")
    p.add_argument("--config", help="JSON config file")
    _add_solver_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("benchmark", help="repeated stratified-CV comparison")
    p.add_argument("--inputs", nargs="+", required=True,
                   help="dataset directories or CSVs")
    p.add_argument("--methods", help="comma list (default all six)")
    p.add_argument("--repeats", type=int, help="CV repetitions (default 10)")
    p.add_argument("--folds", type=int, help="fold count (default 5)")
    p.add_argument("--select", type=int,
                   help="features kept after weighting (default ceil(m/2))")
    p.add_argument("--success-top-k", dest="success_top_k", type=int,
                   help="top-k for the success-rate metric (default 10)")
    p.add_argument("--jobs", type=int, help="concurrent cells (default 1)")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--missing-tokens", dest="missing_tokens")
    p.add_argument("--config", help="JSON config file")
    _add_solver_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep", help="rank/beta success-rate grid on synthetic data")
    p.add_argument("--samples", type=int)
    p.add_argument("--informative", type=int)
    p.add_argument("--noise", type=int, help="noise features (default 100)")
    p.add_argument("--classes", type=int)
    p.add_argument("--sep", type=float)
    p.add_argument("--noise-var", dest="noise_var", type=float)
    p.add_argument("--mechanism", choices=["mcar", "mnar"])
    p.add_argument("--rate", type=float, help="missing fraction (default 0.05)")
    p.add_argument("--seeds", type=int, help="datasets per cell (default 10)")
    p.add_argument("--r-grid", dest="r_grid", help="comma list (default 1,3,5,10)")
    p.add_argument("--beta-grid", dest="beta_grid",
                   help="comma list (default 0.25,0.5,1,2,5,10,20,30)")
    p.add_argument("--config", help="JSON config file")
    _add_solver_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fetch", help="download a dataset CSV with checksum check")
    p.add_argument("--url", required=True)
    p.add_argument("--sha256", help="expected hex digest")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
