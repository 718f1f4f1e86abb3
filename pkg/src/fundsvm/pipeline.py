"""Glue from raw inputs to the matrices the evaluation loop consumes."""
from __future__ import annotations

import datetime as dt

from .dataset import (
    WindowSpec,
    build_prediction_set,
    build_training_set,
    compute_labels,
    prediction_labels,
)
from .evaluate import PipelineData
from .ingest import FundamentalsPanel, PriceTable, StockMeta, UniverseRules, filter_universe
from .preprocess import PreprocessConfig, run_preprocess


def prepare_data(panel: FundamentalsPanel, meta: dict[str, StockMeta], rules: UniverseRules,
                 prices: PriceTable, announcements: dict[tuple[str, int], dt.date],
                 pre_cfg: PreprocessConfig, spec: WindowSpec,
                 trace: list | None = None) -> PipelineData:
    """Screen, preprocess, label, and window the data for one prediction year.

    Only panel years up to ``prediction_year - 1`` feed preprocessing, so later
    fundamentals cannot leak into the smoothing or the z-scores.
    """
    universe = filter_universe(panel, meta, rules)
    universe = _clip_years(universe, spec.prediction_year - 1)
    clean = run_preprocess(universe, pre_cfg, trace)
    labels = compute_labels(prices, announcements, spec.horizon_months, clean.tickers)
    X_train, y_train = build_training_set(clean, labels, spec)
    X_pred = build_prediction_set(clean, spec)
    return PipelineData(X_train, y_train, X_pred, prediction_labels(labels, X_pred))


def _clip_years(panel: FundamentalsPanel, last_year: int) -> FundamentalsPanel:
    if panel.years[-1] <= last_year:
        return panel
    keep = last_year - panel.years[0] + 1
    return FundamentalsPanel(panel.tickers, panel.years[:keep], panel.features,
                             panel.values[:, :keep, :])
