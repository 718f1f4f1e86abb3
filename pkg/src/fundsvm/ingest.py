"""Flat-file loaders and the universe screen.

All inputs are plain CSV with a header row. Fundamentals are long-format
(``ticker,year,feature,value``) with an empty ``value`` marking a missing cell;
missing cells live in memory as NaN.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateCell,
    EmptyFile,
    EmptyUniverse,
    MalformedRow,
    MetaMissing,
    NonPositivePrice,
    UnsortableDates,
)

FUNDAMENTALS_HEADER = ("ticker", "year", "feature", "value")
PRICES_HEADER = ("ticker", "date", "adj_close")
INDEX_HEADER = ("date", "level")
META_HEADER = ("ticker", "market_cap", "active")
ANNOUNCEMENTS_HEADER = ("ticker", "year", "announcement_date")


@dataclass(frozen=True, eq=False)
class FundamentalsPanel:
    """Stock x year x feature table; NaN marks a missing cell."""

    tickers: tuple[str, ...]
    years: tuple[int, ...]
    features: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        object.__setattr__(self, "features", tuple(self.features))
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        shape = (len(self.tickers), len(self.years), len(self.features))
        if values.shape != shape:
            raise ValueError(f"values shape {values.shape} does not match {shape}")
        if len(set(self.tickers)) != len(self.tickers):
            raise ValueError("duplicate tickers")
        if len(set(self.features)) != len(self.features):
            raise ValueError("duplicate features")
        if any(b - a != 1 for a, b in zip(self.years, self.years[1:])):
            raise ValueError("years must be strictly increasing and consecutive")
        if np.isinf(values).any():
            raise ValueError("infinite values are not allowed")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def replace(self, values=None, tickers=None, features=None) -> FundamentalsPanel:
        return FundamentalsPanel(
            tickers=self.tickers if tickers is None else tickers,
            years=self.years,
            features=self.features if features is None else features,
            values=self.values if values is None else values,
        )

    def select_tickers(self, keep: list[str]) -> FundamentalsPanel:
        pos = {t: i for i, t in enumerate(self.tickers)}
        idx = [pos[t] for t in keep]
        return self.replace(values=self.values[idx], tickers=tuple(keep))

    def year_index(self, year: int) -> int:
        return int(year) - self.years[0]

    def equals(self, other: FundamentalsPanel) -> bool:
        """Bit-exact comparison, NaN == NaN."""
        return (
            self.tickers == other.tickers
            and self.years == other.years
            and self.features == other.features
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class StockMeta:
    ticker: str
    market_cap: float
    coverage: float
    year_span: int
    active: bool = True

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage {self.coverage} outside [0, 1]")
        if self.year_span < 0 or self.market_cap < 0:
            raise ValueError("year_span and market_cap must be non-negative")


@dataclass(frozen=True)
class UniverseRules:
    min_coverage: float = 0.5
    min_years: int = 10
    require_active: bool = True
    drop_smallest_cap: int = 152

    def __post_init__(self):
        if not 0.0 <= self.min_coverage <= 1.0:
            raise ValueError("min_coverage must lie in [0, 1]")
        if self.min_years < 0 or self.drop_smallest_cap < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True, eq=False)
class PriceTable:
    """Per-ticker adjusted closes plus the benchmark index, both date-sorted.

    Dates are ``datetime64[D]`` arrays so lookups can use ``searchsorted``.
    """

    closes: dict[str, tuple[np.ndarray, np.ndarray]]
    index_dates: np.ndarray
    index_levels: np.ndarray
    tickers: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.tickers:
            object.__setattr__(self, "tickers", tuple(self.closes))

    def __len__(self):
        return sum(len(d) for d, _ in self.closes.values())


def _open_rows(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: file is empty") from None
        if tuple(h.strip() for h in first) != header:
            raise MalformedRow(f"{path}: expected header {','.join(header)}, got {','.join(first)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, [c.strip() for c in row]))
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    return rows


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRow(f"{where}: non-finite number {text!r}")
    return value


def _parse_int(text, where):
    try:
        return int(text)
    except ValueError:
        raise MalformedRow(f"{where}: not an integer: {text!r}") from None


def _parse_date(text, where):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise MalformedRow(f"{where}: not an ISO-8601 date: {text!r}") from None


def load_fundamentals(path) -> FundamentalsPanel:
    """Read a long-format fundamentals CSV.

    Ticker and feature order follow first appearance in the file. The year axis
    spans min..max year; triples absent from the file are missing.
    """
    rows = _open_rows(path, FUNDAMENTALS_HEADER)
    tickers: dict[str, int] = {}
    features: dict[str, int] = {}
    cells: dict[tuple[str, int, str], float] = {}
    for lineno, (ticker, year_s, feature, value_s) in rows:
        where = f"{path}:{lineno}"
        if not ticker or not feature:
            raise MalformedRow(f"{where}: empty ticker or feature")
        year = _parse_int(year_s, where)
        value = math.nan if value_s == "" else _parse_float(value_s, where)
        key = (ticker, year, feature)
        if key in cells:
            raise DuplicateCell(f"{where}: duplicate cell {key}")
        cells[key] = value
        tickers.setdefault(ticker, len(tickers))
        features.setdefault(feature, len(features))

    all_years = [k[1] for k in cells]
    years = tuple(range(min(all_years), max(all_years) + 1))
    values = np.full((len(tickers), len(years), len(features)), np.nan)
    for (ticker, year, feature), value in cells.items():
        values[tickers[ticker], year - years[0], features[feature]] = value
    return FundamentalsPanel(tuple(tickers), years, tuple(features), values)


def write_fundamentals(panel: FundamentalsPanel, path) -> None:
    """Canonical long-format writer; every cell is written, missing as empty."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(format_fundamentals(panel))


def format_fundamentals(panel: FundamentalsPanel) -> str:
    lines = [",".join(FUNDAMENTALS_HEADER)]
    for i, ticker in enumerate(panel.tickers):
        for j, year in enumerate(panel.years):
            for k, feature in enumerate(panel.features):
                v = panel.values[i, j, k]
                lines.append(f"{ticker},{year},{feature},{'' if math.isnan(v) else repr(float(v))}")
    return "\n".join(lines) + "\n"


def load_prices(path, index_path) -> PriceTable:
    """Read stock closes and index levels; each series is sorted by date on load."""
    by_ticker: dict[str, list[tuple[dt.date, float]]] = {}
    for lineno, (ticker, date_s, close_s) in _open_rows(path, PRICES_HEADER):
        where = f"{path}:{lineno}"
        date = _parse_date(date_s, where)
        close = _parse_float(close_s, where)
        if close <= 0:
            raise NonPositivePrice(f"{where}: adj_close must be > 0, got {close}")
        by_ticker.setdefault(ticker, []).append((date, close))

    index_rows = []
    for lineno, (date_s, level_s) in _open_rows(index_path, INDEX_HEADER):
        where = f"{index_path}:{lineno}"
        level = _parse_float(level_s, where)
        if level <= 0:
            raise NonPositivePrice(f"{where}: index level must be > 0, got {level}")
        index_rows.append((_parse_date(date_s, where), level))

    closes = {t: _to_series(rows, t) for t, rows in by_ticker.items()}
    index_dates, index_levels = _to_series(index_rows, "index")
    return PriceTable(closes, index_dates, index_levels)


def _to_series(rows, name):
    rows = sorted(rows, key=lambda r: r[0])
    dates = np.array([r[0] for r in rows], dtype="datetime64[D]")
    if len(dates) > 1 and np.any(dates[1:] == dates[:-1]):
        raise UnsortableDates(f"{name}: duplicate dates cannot be strictly ordered")
    return dates, np.array([r[1] for r in rows], dtype=np.float64)


def write_prices(prices: PriceTable, path, index_path) -> None:
    lines = [",".join(PRICES_HEADER)]
    for ticker in prices.tickers:
        dates, closes = prices.closes[ticker]
        lines.extend(f"{ticker},{d},{repr(float(c))}" for d, c in zip(dates, closes))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    lines = [",".join(INDEX_HEADER)]
    lines.extend(f"{d},{repr(float(v))}" for d, v in zip(prices.index_dates, prices.index_levels))
    Path(index_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def compute_meta(panel: FundamentalsPanel, market_caps: dict[str, float],
                 active: dict[str, bool]) -> dict[str, StockMeta]:
    """Derive coverage and year span from the raw panel for each ticker with caps.

    Coverage is measured over the full panel year range, before preprocessing.
    """
    present = ~panel.missing
    cells_per_stock = panel.shape[1] * panel.shape[2]
    meta = {}
    for i, ticker in enumerate(panel.tickers):
        if ticker not in market_caps:
            continue
        coverage = float(present[i].sum()) / cells_per_stock if cells_per_stock else 0.0
        meta[ticker] = StockMeta(
            ticker=ticker,
            market_cap=float(market_caps[ticker]),
            coverage=coverage,
            year_span=int(present[i].any(axis=1).sum()),
            active=bool(active.get(ticker, True)),
        )
    return meta


def load_meta(path, panel: FundamentalsPanel) -> dict[str, StockMeta]:
    caps, active = {}, {}
    for lineno, (ticker, cap_s, active_s) in _open_rows(path, META_HEADER):
        where = f"{path}:{lineno}"
        cap = _parse_float(cap_s, where)
        if cap < 0:
            raise MalformedRow(f"{where}: market_cap must be >= 0")
        if active_s not in ("0", "1"):
            raise MalformedRow(f"{where}: active must be 0 or 1, got {active_s!r}")
        caps[ticker] = cap
        active[ticker] = active_s == "1"
    return compute_meta(panel, caps, active)


def write_meta(meta: dict[str, StockMeta], path) -> None:
    lines = [",".join(META_HEADER)]
    lines.extend(f"{m.ticker},{repr(float(m.market_cap))},{int(m.active)}" for m in meta.values())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_announcements(path) -> dict[tuple[str, int], dt.date]:
    """Map (ticker, fiscal year) to the date its annual financials became public."""
    out = {}
    for lineno, (ticker, year_s, date_s) in _open_rows(path, ANNOUNCEMENTS_HEADER):
        where = f"{path}:{lineno}"
        key = (ticker, _parse_int(year_s, where))
        if key in out:
            raise DuplicateCell(f"{where}: duplicate announcement {key}")
        out[key] = _parse_date(date_s, where)
    return out


def write_announcements(announcements: dict[tuple[str, int], dt.date], path) -> None:
    lines = [",".join(ANNOUNCEMENTS_HEADER)]
    lines.extend(f"{t},{y},{d.isoformat()}" for (t, y), d in announcements.items())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def filter_universe(panel: FundamentalsPanel, meta: dict[str, StockMeta],
                    rules: UniverseRules) -> FundamentalsPanel:
    """Apply the coverage, history, and activity screens, then drop the smallest caps.

    Screens run in that order. Cap ties at the drop boundary fall to the
    lexicographically smaller ticker first. Surviving tickers keep panel order.
    """
    missing = [t for t in panel.tickers if t not in meta]
    if missing:
        raise MetaMissing(f"no metadata for {len(missing)} ticker(s), e.g. {missing[:3]}")

    survivors = [t for t in panel.tickers if meta[t].coverage >= rules.min_coverage]
    survivors = [t for t in survivors if meta[t].year_span >= rules.min_years]
    if rules.require_active:
        survivors = [t for t in survivors if meta[t].active]

    if rules.drop_smallest_cap:
        by_cap = sorted(survivors, key=lambda t: (meta[t].market_cap, t))
        dropped = set(by_cap[: rules.drop_smallest_cap])
        survivors = [t for t in survivors if t not in dropped]

    if not survivors:
        raise EmptyUniverse("every ticker was removed by the universe rules")
    return panel.select_tickers(survivors)
