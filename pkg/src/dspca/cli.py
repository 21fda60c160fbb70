"""Command-line interface: tune, predict, simulate, screen.

Every command writes a ``<command>_config.json`` echo of its fully
resolved options into the output directory; rerunning with
``--config <that file>`` reproduces the outputs exactly.  Explicit flags
override config-file values, which override built-in defaults.

Exit codes: 0 success, 2 usage or input problem, 3 data-shape problem,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .classifier import Hyperparameters, predict_detailed
from .dataset import (
    Dataset,
    load_csv,
    normalize_index,
    save_csv,
    screening_manifest,
    split_manifest,
    stratified_split,
    t_test_screen,
)
from .errors import (
    CsvFormatError,
    CsvParseError,
    DegenerateIndexError,
    DspcaError,
    SchemaError,
    ShapeMismatchError,
    SplitError,
)
from .kernel import (
    bandwidth_search,
    default_bandwidth_grid,
    select_from_search,
)
from .simulation import ALL_METHODS, run_benchmark
from .tuning import TuningGrid, cv_select, default_grid

OUT_DIR_ENV = "DSPCA_OUT_DIR"

_DEFAULT_RHOS = [math.exp(r) for r in range(-1, 7)]

DEFAULTS: dict[str, dict] = {
    "tune": {
        "train": None,
        "out_dir": None,
        "label_col": "y",
        "index_col": "u",
        "normalize_index": True,
        "bw_grid": None,
        "bw_num": 20,
        "bw_min": 0.02,
        "bw_max": 1.0,
        "rhos": None,
        "kmax": 5,
        "folds": 5,
        "seed": 0,
        "variant": "lda",
    },
    "predict": {
        "train": None,
        "test": None,
        "params": None,
        "out_dir": None,
        "label_col": "y",
        "index_col": "u",
    },
    "simulate": {
        "model": None,
        "p": None,
        "reps": None,
        "n1": 100,
        "n2": 100,
        "methods": [m.lower() for m in ALL_METHODS],
        "seed": 0,
        "jobs": 1,
        "sampler": "auto",
        "rhos": None,
        "kmax": 5,
        "folds": 5,
        "bw_grid": None,
        "out_dir": None,
    },
    "screen": {
        "input": None,
        "p_keep": None,
        "test_fraction": None,
        "seed": 0,
        "label_col": "y",
        "index_col": "u",
        "out_dir": None,
    },
}


def _floats(value) -> list[float]:
    if isinstance(value, str):
        parts = [s for s in value.split(",") if s.strip()]
        return [float(s) for s in parts]
    return [float(v) for v in value]


def _strings(value) -> list[str]:
    if isinstance(value, str):
        return [s.strip() for s in value.split(",") if s.strip()]
    return [str(v) for v in value]


def _build_parser() -> argparse.ArgumentParser:
    sup = argparse.SUPPRESS
    parser = argparse.ArgumentParser(
        prog="dspca",
        description="Index-dependent supervised principal component classification.",
    )
    parser.add_argument("--version", action="version", version=f"dspca {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON config echo to rerun from")
        sp.add_argument("--out-dir", dest="out_dir", default=sup,
                        help=f"output directory (default: ${OUT_DIR_ENV} or '.')")

    t = sub.add_parser("tune", help="select bandwidths and (rho, K) on a training CSV")
    common(t)
    t.add_argument("--train", default=sup, help="training CSV path")
    t.add_argument("--label-col", dest="label_col", default=sup)
    t.add_argument("--index-col", dest="index_col", default=sup)
    t.add_argument("--no-normalize-index", dest="normalize_index",
                   action="store_false", default=sup,
                   help="keep raw index values instead of rescaling to [0, 1]")
    t.add_argument("--bw-grid", dest="bw_grid", default=sup,
                   help="comma-separated candidate bandwidths")
    t.add_argument("--bw-num", dest="bw_num", type=int, default=sup)
    t.add_argument("--bw-min", dest="bw_min", type=float, default=sup)
    t.add_argument("--bw-max", dest="bw_max", type=float, default=sup)
    t.add_argument("--rhos", default=sup, help="comma-separated rho candidates")
    t.add_argument("--kmax", type=int, default=sup)
    t.add_argument("--folds", type=int, default=sup)
    t.add_argument("--seed", type=int, default=sup)
    t.add_argument("--variant", choices=["lda", "qda"], default=sup)

    pr = sub.add_parser("predict", help="label a test CSV with tuned parameters")
    common(pr)
    pr.add_argument("--train", default=sup, help="training CSV path")
    pr.add_argument("--test", default=sup, help="test CSV path (label column optional)")
    pr.add_argument("--params", default=sup, help="params.json written by tune")
    pr.add_argument("--label-col", dest="label_col", default=sup)
    pr.add_argument("--index-col", dest="index_col", default=sup)

    si = sub.add_parser("simulate", help="Monte-Carlo benchmark on a built-in model")
    common(si)
    si.add_argument("--model", type=int, default=sup, help="model id, 1..6")
    si.add_argument("--p", type=int, default=sup, help="feature dimension")
    si.add_argument("--reps", type=int, default=sup, help="number of replicates (>= 2)")
    si.add_argument("--n1", type=int, default=sup)
    si.add_argument("--n2", type=int, default=sup)
    si.add_argument("--methods", default=sup,
                    help="comma-separated subset of oracle,dspcalda,dspcaqda")
    si.add_argument("--seed", type=int, default=sup)
    si.add_argument("--jobs", type=int, default=sup, help="parallel replicate workers")
    si.add_argument("--sampler", choices=["auto", "generic"], default=sup)
    si.add_argument("--rhos", default=sup)
    si.add_argument("--kmax", type=int, default=sup)
    si.add_argument("--folds", type=int, default=sup)
    si.add_argument("--bw-grid", dest="bw_grid", default=sup)

    sc = sub.add_parser("screen", help="split and keep top features by Welch t-statistic")
    common(sc)
    sc.add_argument("--input", default=sup, help="labeled CSV path")
    sc.add_argument("--p-keep", dest="p_keep", type=int, default=sup)
    sc.add_argument("--test-fraction", dest="test_fraction", type=float, default=sup)
    sc.add_argument("--seed", type=int, default=sup)
    sc.add_argument("--label-col", dest="label_col", default=sup)
    sc.add_argument("--index-col", dest="index_col", default=sup)
    return parser


def _resolve(ns: argparse.Namespace) -> dict:
    command = ns.command
    defaults = DEFAULTS[command]
    file_cfg = {}
    if ns.config:
        with open(ns.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        file_cfg = {k: v for k, v in raw.items() if k in defaults}
    user = {
        k: v for k, v in vars(ns).items() if k in defaults
    }
    cfg = {**defaults, **file_cfg, **user}
    cfg["command"] = command
    if cfg.get("out_dir") is None:
        cfg["out_dir"] = os.environ.get(OUT_DIR_ENV, ".")
    return cfg


def _require(cfg: dict, keys: list[str]) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ValueError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _echo_config(cfg: dict) -> None:
    path = os.path.join(cfg["out_dir"], f"{cfg['command']}_config.json")
    _write_json(path, cfg)


def _load_train(cfg: dict) -> Dataset:
    ds = load_csv(cfg["train"], label_col=cfg["label_col"], index_col=cfg["index_col"])
    ds.require_both_classes()
    return ds


def cmd_tune(cfg: dict) -> int:
    _require(cfg, ["train"])
    ds = _load_train(cfg)
    if cfg["normalize_index"]:
        ds = normalize_index(ds)
    if cfg["bw_grid"] is not None:
        grid = _floats(cfg["bw_grid"])
        cfg["bw_grid"] = grid
    else:
        grid = default_bandwidth_grid(cfg["bw_num"], cfg["bw_min"], cfg["bw_max"]).tolist()
    search = bandwidth_search(ds, grid)
    bw = select_from_search(search)
    rhos = _floats(cfg["rhos"]) if cfg["rhos"] is not None else _DEFAULT_RHOS
    cfg["rhos"] = rhos
    tg = TuningGrid(rhos=tuple(rhos), k_max=cfg["kmax"], folds=cfg["folds"], seed=cfg["seed"])
    report = cv_select(ds, bw, tg, cfg["variant"])
    hp = Hyperparameters(
        bandwidths=bw, rho=report.chosen_rho, K=report.chosen_K, variant=cfg["variant"]
    )
    out = cfg["out_dir"]
    _write_json(os.path.join(out, "bandwidths.json"), {"chosen": bw.to_dict(), "search": search})
    _write_json(os.path.join(out, "cv_report.json"), report.to_dict())
    _write_json(
        os.path.join(out, "params.json"),
        {**hp.to_dict(), "normalize_index": cfg["normalize_index"]},
    )
    _echo_config(cfg)
    print(f"bandwidths: mean_h={bw.mean_h} cov_h={bw.cov_h}")
    print(f"selected rho={hp.rho:.6g} K={hp.K} variant={hp.variant}")
    print(f"wrote bandwidths.json, cv_report.json, params.json in {out}")
    return 0


def cmd_predict(cfg: dict) -> int:
    _require(cfg, ["train", "test", "params"])
    with open(cfg["params"], "r", encoding="utf-8") as fh:
        params_raw = json.load(fh)
    hp = Hyperparameters.from_dict(params_raw)
    normalize = bool(params_raw.get("normalize_index", True))
    train = _load_train(cfg)
    loaded = load_csv(
        cfg["test"], label_col=cfg["label_col"], index_col=cfg["index_col"],
        require_label=False,
    )
    if isinstance(loaded, Dataset):
        X, u_raw, truth = loaded.features, loaded.indices, loaded.labels
    else:
        X, u_raw, truth = loaded
    if X.shape[1] != train.p:
        raise ShapeMismatchError(
            f"test has {X.shape[1]} features, training has {train.p}"
        )
    if normalize:
        train = normalize_index(train)
        u = train.index_map.apply(u_raw)
    else:
        u = u_raw
    res = predict_detailed(train, (X, u), hp)
    out = cfg["out_dir"]
    pred_path = os.path.join(out, "predictions.csv")
    with open(pred_path, "w", encoding="utf-8") as fh:
        fh.write("id,u,score,label\n")
        for i in range(len(X)):
            fh.write(
                f"{i},{format(u_raw[i], '.17g')},{format(res.scores[i], '.10g')},"
                f"{int(res.labels[i])}\n"
            )
    _echo_config(cfg)
    print(f"wrote {pred_path}")
    if truth is not None:
        ok = res.labels != 0
        counts = {
            (t, pred): int(np.sum((truth == t) & (res.labels == pred) & ok))
            for t in (1, 2)
            for pred in (1, 2)
        }
        rate = float(np.mean(res.labels[ok] != truth[ok])) if ok.any() else float("nan")
        print("confusion (rows true, cols predicted):")
        print("        pred 1  pred 2")
        print(f"true 1  {counts[(1, 1)]:6d}  {counts[(1, 2)]:6d}")
        print(f"true 2  {counts[(2, 1)]:6d}  {counts[(2, 2)]:6d}")
        print(f"misclassification: {rate:.4f}")
    return 0


def cmd_simulate(cfg: dict) -> int:
    _require(cfg, ["model", "p", "reps"])
    methods = _strings(cfg["methods"])
    cfg["methods"] = methods
    rhos = _floats(cfg["rhos"]) if cfg["rhos"] is not None else _DEFAULT_RHOS
    cfg["rhos"] = rhos
    bw_grid = _floats(cfg["bw_grid"]) if cfg["bw_grid"] is not None else None
    cfg["bw_grid"] = bw_grid
    tg = TuningGrid(rhos=tuple(rhos), k_max=cfg["kmax"], folds=cfg["folds"], seed=cfg["seed"])
    result = run_benchmark(
        model_id=cfg["model"],
        p=cfg["p"],
        reps=cfg["reps"],
        n1=cfg["n1"],
        n2=cfg["n2"],
        methods=methods,
        seed=cfg["seed"],
        bw_grid=bw_grid,
        tuning_grid=tg,
        sampler=cfg["sampler"],
        n_jobs=cfg["jobs"],
    )
    out = cfg["out_dir"]
    csv_path = os.path.join(out, "benchmark.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(result.csv_table())
    _write_json(os.path.join(out, "benchmark.json"), result.to_dict())
    _echo_config(cfg)
    print(result.csv_table(), end="")
    for m in result.methods:
        s = result.stats[m]
        print(f"{m}: mean={s['mean']:.4f} se={s['se']:.4f} "
              f"mean_time={s['mean_seconds']:.2f}s over {result.reps_used} reps")
    print(f"wrote benchmark.csv, benchmark.json in {out}")
    return 0


def cmd_screen(cfg: dict) -> int:
    _require(cfg, ["input", "p_keep"])
    ds = load_csv(cfg["input"], label_col=cfg["label_col"], index_col=cfg["index_col"])
    out = cfg["out_dir"]
    manifest = {"p_keep": cfg["p_keep"], "seed": cfg["seed"],
                "test_fraction": cfg["test_fraction"]}
    if cfg["test_fraction"] is not None:
        train, test = stratified_split(ds, cfg["test_fraction"], cfg["seed"])
        manifest.update(split_manifest(cfg["seed"], cfg["test_fraction"], train, test))
    else:
        train, test = ds, None
    selected = t_test_screen(train, cfg["p_keep"])
    manifest.update(screening_manifest(train, selected))
    train_path = os.path.join(out, "train_screened.csv")
    save_csv(train.with_features(selected), train_path)
    written = [train_path]
    if test is not None:
        test_path = os.path.join(out, "test_screened.csv")
        save_csv(test.with_features(selected), test_path)
        written.append(test_path)
    _write_json(os.path.join(out, "screen_manifest.json"), manifest)
    _echo_config(cfg)
    print(f"kept {len(selected)} of {ds.p} features")
    print(f"wrote {', '.join(written)} and screen_manifest.json in {out}")
    return 0


_COMMANDS = {
    "tune": cmd_tune,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "screen": cmd_screen,
}

_USAGE_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    CsvFormatError,
    CsvParseError,
    SchemaError,
    DegenerateIndexError,
    ValueError,
    KeyError,
)
_SHAPE_ERRORS = (ShapeMismatchError, SplitError)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        cfg = _resolve(ns)
        os.makedirs(cfg["out_dir"], exist_ok=True)
        return _COMMANDS[ns.command](cfg)
    except _SHAPE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except np.linalg.LinAlgError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except _USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DspcaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
