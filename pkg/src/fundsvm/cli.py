"""Command-line front end.

    fundsvm [--config PATH] [--seed N] [--out DIR] [--set key=value ...] COMMAND

Commands: synth, preprocess, train, predict, backtest, sweep. Exit codes are 0
on success, 2 for configuration errors, 3 for data errors, 4 for compute
errors; failures print a one-line JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig
from .dataset import build_prediction_set, random_partition
from .errors import ConfigInvalid, DataError, FundSvmError
from .evaluate import derive_seed, run_realizations, sweep_cardinality, sweep_csv
from .ingest import (
    FundamentalsPanel,
    filter_universe,
    format_fundamentals,
    load_announcements,
    load_fundamentals,
    load_meta,
    load_prices,
    write_announcements,
    write_fundamentals,
    write_meta,
    write_prices,
)
from .pipeline import _clip_years, prepare_data
from .preprocess import STAGES, run_preprocess
from .svm import (
    TrainedModel,
    decision_value,
    default_c_grid,
    default_sigma_grid,
    grid_search,
    median_distance,
    predict_label,
)
from .synth import generate_universe

log = logging.getLogger("fundsvm")


def write_atomic(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(cfg: RunConfig, command: str, outputs: list[str], extra=None) -> None:
    doc = {
        "command": command,
        "config_hash": cfg.hash(),
        "master_seed": cfg.master_seed,
        "outputs": sorted(outputs),
        "versions": {
            "fundsvm": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "config": json.loads(cfg.canonical()),
    }
    if extra:
        doc.update(extra)
    write_atomic(cfg.output_dir / f"{command}.manifest.json", json.dumps(doc, indent=1) + "\n")


def _load_panel_meta(cfg: RunConfig):
    panel = load_fundamentals(cfg.path("fundamentals"))
    meta = load_meta(cfg.path("meta"), panel)
    return panel, meta


def _load_all(cfg: RunConfig):
    panel, meta = _load_panel_meta(cfg)
    prices = load_prices(cfg.path("prices"), cfg.path("index"))
    announcements = load_announcements(cfg.path("announcements"))
    return panel, meta, prices, announcements


def _default_year(panel: FundamentalsPanel) -> int:
    return panel.years[-1] + 1


def load_pipeline_data(cfg: RunConfig):
    """Load every input file named in the config and build the matrices."""
    panel, meta, prices, announcements = _load_all(cfg)
    spec = cfg.window_spec(_default_year(panel))
    return prepare_data(panel, meta, cfg.universe_rules(), prices, announcements,
                        cfg.preprocess_config(), spec)


def cmd_synth(cfg: RunConfig, args) -> list[str]:
    spec = cfg.synth_spec()
    u = generate_universe(spec)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        tmp = Path(tmp)
        write_fundamentals(u.panel, tmp / "fundamentals.csv")
        write_prices(u.prices, tmp / "prices.csv", tmp / "index.csv")
        write_meta(u.meta, tmp / "meta.csv")
        write_announcements(u.announcements, tmp / "announcements.csv")
        names = ["fundamentals.csv", "prices.csv", "index.csv", "meta.csv", "announcements.csv"]
        for name in names:
            os.replace(tmp / name, out / name)

    run_doc = json.loads(json.dumps(cfg.doc))
    run_doc["paths"] = {
        "fundamentals": "fundamentals.csv", "prices": "prices.csv", "index": "index.csv",
        "meta": "meta.csv", "announcements": "announcements.csv",
    }
    run_doc["universe"]["drop_smallest_cap"] = 0
    run_doc["window"]["prediction_year"] = spec.prediction_year
    run_doc["synth"]["seed"] = spec.seed
    run_doc["output_dir"] = "."
    write_atomic(out / "config.json", json.dumps(run_doc, indent=1) + "\n")
    return names + ["config.json"]


def cmd_preprocess(cfg: RunConfig, args) -> list[str]:
    wanted = set(args.dump_stage or [])
    if "all" in wanted:
        wanted = set(STAGES)
    unknown = wanted - set(STAGES)
    if unknown:
        raise ConfigInvalid(f"unknown stage(s) {sorted(unknown)}; choose from {', '.join(STAGES)}")
    panel, meta = _load_panel_meta(cfg)
    spec = cfg.window_spec(_default_year(panel))
    universe = _clip_years(filter_universe(panel, meta, cfg.universe_rules()), spec.prediction_year - 1)
    trace = []
    clean = run_preprocess(universe, cfg.preprocess_config(), trace)
    out = cfg.output_dir
    outputs = ["preprocessed.csv", "transform_log.json"]
    write_atomic(out / "preprocessed.csv", format_fundamentals(clean))
    log_doc = [{"stage": r.name, "shape": list(r.panel.shape), **r.detail} for r in trace]
    write_atomic(out / "transform_log.json", json.dumps(log_doc, indent=1) + "\n")
    for rec in trace:
        if rec.name in wanted:
            name = f"stage_{rec.name}.csv"
            write_atomic(out / name, format_fundamentals(rec.panel))
            outputs.append(name)
    return outputs


def cmd_train(cfg: RunConfig, args) -> list[str]:
    data = load_pipeline_data(cfg)
    ecfg = cfg.eval_config()
    seed = derive_seed(cfg.master_seed, 0)
    part = random_partition(len(data.y_train), ecfg.ratio, seed)
    X, y = data.X_train.values, data.y_train.labels
    if ecfg.grid_search:
        sigmas = default_sigma_grid(X[part.train_rows], ecfg.grid_exponents)
        cs = default_c_grid(ecfg.svm, ecfg.grid_exponents)
    else:
        sigmas, cs = [median_distance(X[part.train_rows])], [ecfg.svm.box_constraint]
    grid = grid_search(X, y, part, sigmas, cs, ecfg.svm)
    out = cfg.output_dir
    write_atomic(out / "model.json", grid.model.to_json())
    lines = ["sigma,box_constraint,holdout_accuracy"]
    lines.extend(f"{s!r},{c!r},{a!r}" for s, c, a in grid.scores)
    write_atomic(out / "grid.csv", "\n".join(lines) + "\n")
    return ["model.json", "grid.csv"]


def cmd_predict(cfg: RunConfig, args) -> list[str]:
    if not args.model:
        raise ConfigInvalid("predict needs --model PATH")
    model_path = Path(args.model)
    if not model_path.exists():
        raise ConfigInvalid(f"model file not found: {model_path}")
    try:
        model = TrainedModel.from_json(model_path.read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid(f"cannot read model file: {exc}") from None
    panel, meta = _load_panel_meta(cfg)
    spec = cfg.window_spec(_default_year(panel))
    universe = _clip_years(filter_universe(panel, meta, cfg.universe_rules()), spec.prediction_year - 1)
    clean = run_preprocess(universe, cfg.preprocess_config())
    X = build_prediction_set(clean, spec)
    f = decision_value(model, X.values)
    labels = predict_label(model, X.values)
    lines = ["ticker,year,decision_value,label"]
    lines.extend(f"{t},{yr},{float(v)!r},{int(lab)}" for (t, yr), v, lab in zip(X.row_index, f, labels))
    write_atomic(cfg.output_dir / "predictions.csv", "\n".join(lines) + "\n")
    return ["predictions.csv"]


def cmd_backtest(cfg: RunConfig, args) -> list[str]:
    data = load_pipeline_data(cfg)
    report = run_realizations(data, cfg.realization_count, cfg.master_seed, cfg.eval_config())
    out = cfg.output_dir
    write_atomic(out / "report.json", report.to_json())
    write_atomic(out / "histogram.csv", report.histogram_csv())
    return ["report.json", "histogram.csv"]


def cmd_sweep(cfg: RunConfig, args) -> list[str]:
    if args.ratios:
        try:
            ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
        except ValueError:
            raise ConfigInvalid(f"--ratios must be comma-separated numbers, got {args.ratios!r}") from None
    else:
        ratios = [float(r) for r in cfg.doc["sweep"]["ratios"]]
    if not ratios or any(not 0 < r < 1 for r in ratios):
        raise ConfigInvalid("sweep ratios must be non-empty and inside (0, 1)")
    data = load_pipeline_data(cfg)
    rows = sweep_cardinality(data, ratios, int(cfg.doc["sweep"]["realizations"]),
                             cfg.master_seed, cfg.eval_config())
    write_atomic(cfg.output_dir / "sweep.csv", sweep_csv(rows))
    return ["sweep.csv"]


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "predict": cmd_predict,
    "backtest": cmd_backtest,
    "sweep": cmd_sweep,
}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they never clobber flags given before the command
    def d(value):
        return argparse.SUPPRESS if suppress else value

    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", default=d(None), help="JSON run configuration")
    flags.add_argument("--seed", type=int, default=d(None), help="master seed (unsigned 64-bit)")
    flags.add_argument("--out", default=d(None), help="output directory")
    flags.add_argument("--set", dest="overrides", action="append", default=d([]),
                       metavar="KEY=VALUE", help="override a config value, e.g. svm.box_constraint=0.5")
    flags.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fundsvm", parents=[_global_flags(False)],
                                     description="Fundamentals-driven SVM stock classification pipeline.")
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a planted-signal synthetic universe")
    p = sub.add_parser("preprocess", parents=[common], help="screen and preprocess the fundamentals")
    p.add_argument("--dump-stage", action="append", metavar="NAME",
                   help=f"also write an intermediate panel ({', '.join(STAGES)}, or all)")
    sub.add_parser("train", parents=[common], help="grid-search and train one model")
    p = sub.add_parser("predict", parents=[common], help="label the prediction year with a model")
    p.add_argument("--model", help="model JSON written by train")
    sub.add_parser("backtest", parents=[common], help="run the seeded realization study")
    p = sub.add_parser("sweep", parents=[common], help="holdout error vs training-subset ratio")
    p.add_argument("--ratios", help="comma-separated ratios, e.g. 0.5,0.6,0.7")
    return parser


def _fail(exc: FundSvmError) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
    print(json.dumps(err), file=sys.stderr)
    return exc.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, args.overrides, args.seed, args.out)
        outputs = COMMANDS[args.command](cfg, args)
        write_manifest(cfg, args.command, outputs)
    except FundSvmError as exc:
        return _fail(exc)
    except OSError as exc:
        return _fail(DataError(f"{type(exc).__name__}: {exc}"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
