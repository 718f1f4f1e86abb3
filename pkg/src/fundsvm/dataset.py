"""Labels, lagged windows, and the stacked training/prediction matrices.

A label for year ``s`` measures the stock against the index over the horizon
that starts on the announcement date of fiscal-year ``s - 1`` financials. Its
feature window is ``x[s-1], x[s-2], ..., x[s-L]`` stacked in that order.
"""
from __future__ import annotations

import calendar
import datetime as dt
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistory, InsufficientPriceHistory, InvalidRatio, TooFewRows
from .ingest import FundamentalsPanel, PriceTable


@dataclass(frozen=True)
class WindowSpec:
    prediction_year: int
    lookback: int = 5
    train_years: int = 5
    horizon_months: int = 3

    def __post_init__(self):
        if self.lookback < 1 or self.train_years < 1 or self.horizon_months < 1:
            raise ValueError("lookback, train_years and horizon_months must be >= 1")

    @property
    def label_years(self) -> list[int]:
        """Training label years, most recent first."""
        t = self.prediction_year
        return [t - m for m in range(1, self.train_years + 1)]

    @property
    def required_years(self) -> tuple[int, int]:
        t = self.prediction_year
        return t - self.lookback - self.train_years, t - 1


@dataclass(frozen=True)
class LabelRecord:
    label: int
    relative_return: float
    stock_return: float
    index_return: float


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    row_index: tuple[tuple[str, int], ...]
    columns: tuple[tuple[int, str], ...]
    """(lag, feature) per column; lag 1 is the year just before the label year."""

    def __post_init__(self):
        if self.values.shape[0] != len(self.row_index):
            raise ValueError("row_index length must equal row count")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class LabelVector:
    labels: np.ndarray
    relative_returns: np.ndarray
    stock_returns: np.ndarray
    row_index: tuple[tuple[str, int], ...]

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class Partition:
    train_rows: np.ndarray
    holdout_rows: np.ndarray
    seed: int
    ratio: float


def add_months(date: dt.date, months: int) -> dt.date:
    """Calendar-month shift, clamping the day to the target month's length."""
    total = date.month - 1 + months
    year, month = date.year + total // 12, total % 12 + 1
    day = min(date.day, calendar.monthrange(year, month)[1])
    return dt.date(year, month, day)


def _on_or_after(dates: np.ndarray, when: dt.date) -> int | None:
    pos = int(np.searchsorted(dates, np.datetime64(when, "D"), side="left"))
    return pos if pos < len(dates) else None


def window_returns(prices: PriceTable, ticker: str, start: dt.date,
                   horizon_months: int = 3) -> tuple[float, float]:
    """Stock and index simple returns over ``[start, start + horizon]``.

    Each endpoint resolves to the first trading date on or after it, separately
    for the stock and the index.
    """
    end = add_months(start, horizon_months)
    if ticker not in prices.closes:
        raise InsufficientPriceHistory(f"no prices for {ticker}")
    out = []
    for name, (dates, levels) in ((ticker, prices.closes[ticker]),
                                  ("index", (prices.index_dates, prices.index_levels))):
        i0, i1 = _on_or_after(dates, start), _on_or_after(dates, end)
        if i0 is None or i1 is None:
            raise InsufficientPriceHistory(f"{name}: no trading date on or after {start} / {end}")
        out.append(levels[i1] / levels[i0] - 1.0)
    return out[0], out[1]


def compute_label(prices: PriceTable, ticker: str, announcement_date: dt.date,
                  horizon_months: int = 3) -> tuple[int, float]:
    """Return ``(label, relative_return)``; a zero relative return is bearish."""
    r_s, r_m = window_returns(prices, ticker, announcement_date, horizon_months)
    rel = r_s - r_m
    return (1 if rel > 0 else -1), rel


def compute_labels(prices: PriceTable, announcements: dict[tuple[str, int], dt.date],
                   horizon_months: int = 3, tickers=None) -> dict[tuple[str, int], LabelRecord]:
    """Label every announcement that has enough price history.

    Keys are ``(ticker, label_year)`` with ``label_year = fiscal_year + 1``.
    Announcements without prices on or after both endpoints are skipped; the
    matrix builders raise if they need one of them.
    """
    wanted = None if tickers is None else set(tickers)
    out = {}
    for (ticker, fiscal_year), date in sorted(announcements.items()):
        if wanted is not None and ticker not in wanted:
            continue
        try:
            r_s, r_m = window_returns(prices, ticker, date, horizon_months)
        except InsufficientPriceHistory:
            continue
        rel = r_s - r_m
        out[(ticker, fiscal_year + 1)] = LabelRecord(1 if rel > 0 else -1, rel, r_s, r_m)
    return out


def build_window(panel: FundamentalsPanel, ticker: str, year: int, lookback: int) -> np.ndarray:
    """Stack ``x[year-1], ..., x[year-lookback]`` into one vector of length k*lookback."""
    first, last = year - lookback, year - 1
    if first < panel.years[0] or last > panel.years[-1]:
        raise InsufficientHistory(
            f"{ticker}: window {first}..{last} outside panel years {panel.years[0]}..{panel.years[-1]}")
    i = panel.tickers.index(ticker)
    j = [panel.year_index(year - lag) for lag in range(1, lookback + 1)]
    return panel.values[i, j, :].reshape(-1)


def _columns(panel, lookback):
    return tuple((lag, f) for lag in range(1, lookback + 1) for f in panel.features)


def _check_coverage(panel, spec):
    lo, hi = spec.required_years
    if lo < panel.years[0] or hi > panel.years[-1]:
        raise InsufficientHistory(
            f"panel years {panel.years[0]}..{panel.years[-1]} do not cover {lo}..{hi}")


def _window_block(panel, label_years, lookback):
    # (n, len(label_years), k*L) tensor; one vectorized gather instead of per-row loops
    n, _, k = panel.shape
    out = np.empty((n, len(label_years), k * lookback))
    for m, s in enumerate(label_years):
        j = [panel.year_index(s - lag) for lag in range(1, lookback + 1)]
        out[:, m, :] = panel.values[:, j, :].reshape(n, -1)
    return out


def build_training_set(panel: FundamentalsPanel, labels: dict[tuple[str, int], LabelRecord],
                       spec: WindowSpec) -> tuple[DesignMatrix, LabelVector]:
    """Stock-major, year-descending stack of windows with aligned labels."""
    _check_coverage(panel, spec)
    years = spec.label_years
    block = _window_block(panel, years, spec.lookback)
    n, M, width = block.shape
    row_index = tuple((t, s) for t in panel.tickers for s in years)
    missing = [key for key in row_index if key not in labels]
    if missing:
        raise InsufficientPriceHistory(f"no label for {len(missing)} row(s), e.g. {missing[:3]}")
    recs = [labels[key] for key in row_index]
    X = DesignMatrix(block.reshape(n * M, width), row_index, _columns(panel, spec.lookback))
    y = LabelVector(
        labels=np.array([r.label for r in recs], dtype=np.int64),
        relative_returns=np.array([r.relative_return for r in recs]),
        stock_returns=np.array([r.stock_return for r in recs]),
        row_index=row_index,
    )
    return X, y


def build_prediction_set(panel: FundamentalsPanel, spec: WindowSpec) -> DesignMatrix:
    lo, hi = spec.prediction_year - spec.lookback, spec.prediction_year - 1
    if lo < panel.years[0] or hi > panel.years[-1]:
        raise InsufficientHistory(
            f"panel years {panel.years[0]}..{panel.years[-1]} do not cover {lo}..{hi}")
    block = _window_block(panel, [spec.prediction_year], spec.lookback)
    row_index = tuple((t, spec.prediction_year) for t in panel.tickers)
    return DesignMatrix(block[:, 0, :], row_index, _columns(panel, spec.lookback))


def prediction_labels(labels: dict[tuple[str, int], LabelRecord],
                      X_pred: DesignMatrix) -> LabelVector:
    """Realized labels and returns for the rows of a prediction matrix."""
    missing = [key for key in X_pred.row_index if key not in labels]
    if missing:
        raise InsufficientPriceHistory(f"no realized label for {len(missing)} prediction row(s)")
    recs = [labels[key] for key in X_pred.row_index]
    return LabelVector(
        labels=np.array([r.label for r in recs], dtype=np.int64),
        relative_returns=np.array([r.relative_return for r in recs]),
        stock_returns=np.array([r.stock_return for r in recs]),
        row_index=X_pred.row_index,
    )


def train_size(row_count: int, ratio: float) -> int:
    # round half up
    return int(np.floor(ratio * row_count + 0.5))


def random_partition(row_count: int, ratio: float, seed: int) -> Partition:
    if not 0.0 < ratio < 1.0:
        raise InvalidRatio(f"ratio must lie in (0, 1), got {ratio}")
    if row_count < 2:
        raise TooFewRows(f"need at least 2 rows, got {row_count}")
    n_train = train_size(row_count, ratio)
    if n_train in (0, row_count):
        raise TooFewRows(f"ratio {ratio} leaves an empty side for {row_count} rows")
    perm = np.random.default_rng(int(seed)).permutation(row_count)
    return Partition(
        train_rows=np.sort(perm[:n_train]),
        holdout_rows=np.sort(perm[n_train:]),
        seed=int(seed),
        ratio=float(ratio),
    )
