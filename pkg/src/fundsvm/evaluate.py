"""Confusion metrics, the equal-weight portfolio, and the realization studies."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import DesignMatrix, LabelVector, random_partition
from .errors import EmptyInput, EmptyPortfolio, FundSvmError, LengthMismatch
from .svm import (
    KernelParams,
    Solver,
    SvmConfig,
    default_c_grid,
    default_sigma_grid,
    grid_search,
    median_distance,
    predict_label,
)

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, index: int) -> int:
    """SplitMix64 of ``master_seed`` stepped ``index + 1`` times; stable per index."""
    z = (int(master_seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class ConfusionSummary:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def bullish_accuracy(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def bearish_accuracy(self) -> float | None:
        neg = self.tn + self.fp
        return self.tn / neg if neg else None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "accuracy": self.accuracy,
            "bullish_accuracy": self.bullish_accuracy,
            "bearish_accuracy": self.bearish_accuracy,
        }


def confusion_matrix(predicted, actual) -> ConfusionSummary:
    """Counts with bullish (+1) as the positive class."""
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.shape != a.shape:
        raise LengthMismatch(f"predicted {p.shape} vs actual {a.shape}")
    if p.size == 0:
        raise EmptyInput("no labels to compare")
    return ConfusionSummary(
        tp=int(np.sum((p == 1) & (a == 1))),
        fp=int(np.sum((p == 1) & (a != 1))),
        fn=int(np.sum((p != 1) & (a == 1))),
        tn=int(np.sum((p != 1) & (a != 1))),
    )


def portfolio_return(predicted, returns) -> float:
    """Equal-weight mean return of the stocks predicted bullish."""
    p = np.asarray(predicted)
    r = np.asarray(returns, dtype=np.float64)
    if p.shape != r.shape:
        raise LengthMismatch(f"predicted {p.shape} vs returns {r.shape}")
    picked = r[p == 1]
    if picked.size == 0:
        raise EmptyPortfolio("no stock predicted bullish")
    return float(np.mean(picked))


@dataclass(frozen=True, eq=False)
class PipelineData:
    """Training pool and prediction-year rows after preprocessing."""

    X_train: DesignMatrix
    y_train: LabelVector
    X_pred: DesignMatrix
    y_pred: LabelVector


@dataclass(frozen=True)
class EvalConfig:
    svm: SvmConfig = SvmConfig()
    ratio: float = 0.9
    grid_search: bool = True
    grid_exponents: tuple[int, ...] = tuple(range(-4, 5))
    workers: int = 1


@dataclass
class RealizationResult:
    index: int
    seed: int
    train_size: int = 0
    holdout_size: int = 0
    sigma: float | None = None
    box_constraint: float | None = None
    training: ConfusionSummary | None = None
    prediction: ConfusionSummary | None = None
    portfolio_return: float | None = None
    market_return: float | None = None
    excess_return: float | None = None
    flags: list[str] = field(default_factory=list)
    error: str | None = None

    @property
    def included(self) -> bool:
        return self.error is None and self.portfolio_return is not None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            "train_size": self.train_size,
            "holdout_size": self.holdout_size,
            "sigma": self.sigma,
            "box_constraint": self.box_constraint,
            "training": None if self.training is None else self.training.to_dict(),
            "prediction": None if self.prediction is None else self.prediction.to_dict(),
            "portfolio_return": self.portfolio_return,
            "market_return": self.market_return,
            "excess_return": self.excess_return,
            "flags": list(self.flags),
            "error": self.error,
        }


@dataclass
class BacktestReport:
    master_seed: int
    ratio: float
    realizations: list[RealizationResult]
    references: dict
    summary: dict
    histogram: list[tuple[float, float, int]]

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "ratio": self.ratio,
            "realization_count": len(self.realizations),
            "references": self.references,
            "summary": self.summary,
            "histogram": [{"bin_lo": lo, "bin_hi": hi, "count": c} for lo, hi, c in self.histogram],
            "realizations": [r.to_dict() for r in self.realizations],
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=1, allow_nan=False) + "\n"

    def histogram_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        lines.extend(f"{lo!r},{hi!r},{c}" for lo, hi, c in self.histogram)
        return "\n".join(lines) + "\n"


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def reference_returns(y_pred: LabelVector) -> dict:
    """Reference lines: every stock, only true bullish stocks, only true bearish stocks."""
    r = y_pred.stock_returns
    lab = y_pred.labels
    return {
        "market_mean": float(np.mean(r)),
        "all_bullish_mean": portfolio_return(lab, r) if (lab == 1).any() else None,
        "all_bearish_mean": portfolio_return(-lab, r) if (lab == -1).any() else None,
    }


def _stats(values):
    if not values:
        return {"mean": None, "min": None, "max": None}
    arr = np.array(values, dtype=np.float64)
    return {"mean": float(np.mean(arr)), "min": float(np.min(arr)), "max": float(np.max(arr))}


def summarize(realizations: list[RealizationResult]) -> dict:
    """Aggregate statistics over included realizations (no error, non-empty portfolio)."""
    inc = [r for r in realizations if r.included]
    trained = [r for r in realizations if r.training is not None]
    predicted = [r for r in realizations if r.prediction is not None]

    def ratios(rows, attr, name):
        vals = [getattr(getattr(r, attr), name) for r in rows]
        return _stats([v for v in vals if v is not None])

    return {
        "included": len(inc),
        "degenerate": len(realizations) - len(inc),
        "flag_counts": {f: sum(f in r.flags for r in realizations)
                        for f in sorted({f for r in realizations for f in r.flags})},
        "training_accuracy": ratios(trained, "training", "accuracy"),
        "training_bullish_accuracy": ratios(trained, "training", "bullish_accuracy"),
        "training_bearish_accuracy": ratios(trained, "training", "bearish_accuracy"),
        "prediction_accuracy": ratios(predicted, "prediction", "accuracy"),
        "prediction_bullish_accuracy": ratios(predicted, "prediction", "bullish_accuracy"),
        "prediction_bearish_accuracy": ratios(predicted, "prediction", "bearish_accuracy"),
        "portfolio_return": _stats([r.portfolio_return for r in inc]),
        "excess_return": _stats([r.excess_return for r in inc]),
        "positive_excess_count": sum(r.excess_return > 0 for r in inc),
    }


def return_histogram(values) -> list[tuple[float, float, int]]:
    """Fixed-width bins over [min, max], ceil(sqrt(count)) of them."""
    if not values:
        return []
    arr = np.array(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    bins = math.ceil(math.sqrt(arr.size))
    if lo == hi:
        return [(lo, hi, int(arr.size))]
    counts, edges = np.histogram(arr, bins=bins, range=(lo, hi))
    return [(float(edges[b]), float(edges[b + 1]), int(counts[b])) for b in range(bins)]


def _fit_realization(data: PipelineData, seed: int, ratio: float, cfg: EvalConfig):
    part = random_partition(len(data.y_train), ratio, seed)
    X, y = data.X_train.values, data.y_train.labels
    if cfg.grid_search:
        sigmas = default_sigma_grid(X[part.train_rows], cfg.grid_exponents)
        cs = default_c_grid(cfg.svm, cfg.grid_exponents)
    else:
        sigmas = [median_distance(X[part.train_rows])]
        cs = [cfg.svm.box_constraint]
    return part, grid_search(X, y, part, sigmas, cs, cfg.svm)


def run_one(data: PipelineData, index: int, master_seed: int, cfg: EvalConfig) -> RealizationResult:
    seed = derive_seed(master_seed, index)
    res = RealizationResult(index=index, seed=seed)
    try:
        part, grid = _fit_realization(data, seed, cfg.ratio, cfg)
        res.train_size, res.holdout_size = len(part.train_rows), len(part.holdout_rows)
        res.sigma, res.box_constraint = grid.kernel.sigma, grid.box_constraint
        model = grid.model
        if model.solver is Solver.SMO and not model.converged:
            res.flags.append("not_converged")

        y = data.y_train.labels
        res.training = confusion_matrix(
            predict_label(model, data.X_train.values[part.holdout_rows]), y[part.holdout_rows])

        pred = predict_label(model, data.X_pred.values)
        res.prediction = confusion_matrix(pred, data.y_pred.labels)
        res.market_return = float(np.mean(data.y_pred.stock_returns))
        try:
            res.portfolio_return = portfolio_return(pred, data.y_pred.stock_returns)
        except EmptyPortfolio:
            res.flags.append("empty_portfolio")
        else:
            res.excess_return = res.portfolio_return - res.market_return
    except FundSvmError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        res.flags.append("error")
        log.warning("realization %d failed: %s", index, res.error)
    return res


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_realizations(data: PipelineData, realization_count: int = 100, master_seed: int = 0,
                     cfg: EvalConfig = EvalConfig()) -> BacktestReport:
    if realization_count < 1:
        raise ValueError("realization_count must be >= 1")
    results = _map(lambda r: run_one(data, r, master_seed, cfg), range(realization_count), cfg.workers)
    results.sort(key=lambda r: r.index)
    return BacktestReport(
        master_seed=int(master_seed),
        ratio=float(cfg.ratio),
        realizations=results,
        references=reference_returns(data.y_pred),
        summary=summarize(results),
        histogram=return_histogram([r.portfolio_return for r in results if r.included]),
    )


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    min_error: float | None
    mean_error: float | None
    completed: int


def sweep_cardinality(data: PipelineData, ratios, realizations: int = 20, master_seed: int = 0,
                      cfg: EvalConfig = EvalConfig()) -> list[SweepRow]:
    """Minimum and mean holdout error per training-subset ratio.

    Realization ``r`` uses the same derived seed at every ratio, so rows differ
    only through the ratio.
    """
    ratios = [float(r) for r in ratios]
    for r in ratios:
        if not 0.0 < r < 1.0:
            raise ValueError(f"ratio {r} outside (0, 1)")

    def holdout_error(args):
        ratio, r = args
        try:
            _, grid = _fit_realization(data, derive_seed(master_seed, r), ratio, cfg)
        except FundSvmError as exc:
            log.warning("sweep ratio %s realization %d failed: %s", ratio, r, exc)
            return None
        return 1.0 - grid.accuracy

    rows = []
    for ratio in ratios:
        errs = [e for e in _map(holdout_error, [(ratio, r) for r in range(realizations)], cfg.workers)
                if e is not None]
        rows.append(SweepRow(
            ratio=ratio,
            min_error=min(errs) if errs else None,
            mean_error=float(np.mean(errs)) if errs else None,
            completed=len(errs),
        ))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    def fmt(v):
        return "" if v is None else repr(float(v))

    lines = ["ratio,min_error,mean_error"]
    lines.extend(f"{fmt(r.ratio)},{fmt(r.min_error)},{fmt(r.mean_error)}" for r in rows)
    return "\n".join(lines) + "\n"
