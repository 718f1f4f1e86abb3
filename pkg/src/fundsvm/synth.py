"""Seeded synthetic universe with a planted fundamentals -> relative-return signal.

Each feature is a positive level ``scale * exp(vol * g[t])`` whose log-growth
``g`` starts at 0 in the first panel year and drifts along a few slow cosine
modes. The planted score for fiscal year ``s`` is a fixed unit-norm linear
combination of the cross-sectionally standardized growth of the signal
features in year ``s``. The 3-month relative return after that year's
announcement is ``signal_strength * score + noise_sigma * N(0, 1)``, and the
stock price path is bent so the return measured by
:func:`fundsvm.dataset.window_returns` reproduces it.

The first panel year has zero growth everywhere, so it carries no signal and
gets no announcement.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .dataset import _on_or_after, add_months
from .errors import InvalidSpec, SpecMismatch
from .ingest import FundamentalsPanel, PriceTable, StockMeta, compute_meta

ANNOUNCE_WINDOW = (dt.date(2001, 2, 1), dt.date(2001, 6, 30))  # month/day span, year replaced


@dataclass(frozen=True)
class SynthSpec:
    n_stocks: int = 100
    n_years: int = 12
    n_features: int = 12
    signal_features: tuple[int, ...] = (0, 1, 2)
    signal_strength: float = 0.05
    noise_sigma: float = 0.005
    missing_rate: float = 0.03
    seed: int = 0
    start_year: int = 2002
    growth_vol: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "signal_features", tuple(int(i) for i in self.signal_features))
        if self.n_stocks < 2 or self.n_years < 2 or self.n_features < 1:
            raise InvalidSpec("need n_stocks >= 2, n_years >= 2, n_features >= 1")
        if not self.signal_features:
            raise InvalidSpec("signal_features must be non-empty")
        if any(not 0 <= i < self.n_features for i in self.signal_features):
            raise InvalidSpec("signal_features must index existing features (0-based)")
        if len(set(self.signal_features)) != len(self.signal_features):
            raise InvalidSpec("duplicate signal features")
        if self.signal_strength < 0 or self.noise_sigma < 0 or self.growth_vol <= 0:
            raise InvalidSpec("signal_strength, noise_sigma must be >= 0; growth_vol > 0")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise InvalidSpec("missing_rate must lie in [0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidSpec("seed must be an unsigned 64-bit integer")

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(range(self.start_year, self.start_year + self.n_years))

    @property
    def prediction_year(self) -> int:
        return self.start_year + self.n_years


@dataclass(frozen=True, eq=False)
class Universe:
    spec: SynthSpec
    panel: FundamentalsPanel
    prices: PriceTable
    meta: dict[str, StockMeta]
    announcements: dict[tuple[str, int], dt.date]
    weights: np.ndarray
    scores: np.ndarray
    """(stock, panel year) planted scores; NaN for the base year."""
    relative_returns: np.ndarray
    planted_labels: np.ndarray
    """(stock, panel year) labels in {-1, +1}; 0 for the base year."""
    extra: dict = field(default_factory=dict)

    def planted(self) -> dict[tuple[str, int], tuple[int, float]]:
        """Map (ticker, label year) to (planted label, planted relative return)."""
        out = {}
        for i, t in enumerate(self.panel.tickers):
            for j, fy in enumerate(self.panel.years[1:], start=1):
                out[(t, fy + 1)] = (int(self.planted_labels[i, j]), float(self.relative_returns[i, j]))
        return out


def _growth(rng, n, T, k):
    t = np.arange(T)
    modes = np.arange(1, 4)
    basis = np.cos(np.pi * (2 * t[:, None] + 1) * modes[None, :] / (2 * T))  # (T, 3)
    basis = basis - basis[0]
    amp = rng.normal(size=(n, k, modes.size)) / modes
    g = np.einsum("nkm,tm->ntk", amp, basis)
    return g


def _standardize(a):
    mu = a.mean(axis=0, keepdims=True)
    sd = a.std(axis=0, keepdims=True)
    return np.where(sd > 0, (a - mu) / np.where(sd > 0, sd, 1.0), 0.0)


def generate_universe(spec: SynthSpec) -> Universe:
    rng = np.random.default_rng(spec.seed)
    n, T, k = spec.n_stocks, spec.n_years, spec.n_features
    tickers = tuple(f"S{i:03d}" for i in range(n))
    features = tuple(f"f{j:02d}" for j in range(k))
    years = spec.years

    g = _growth(rng, n, T, k)
    scale = np.exp(rng.normal(np.log(1e3), 1.5, size=(n, 1, k)))
    raw = scale * np.exp(spec.growth_vol * g)

    w = rng.normal(size=len(spec.signal_features))
    w /= np.linalg.norm(w)
    zg = _standardize(g)  # per (year, feature) across stocks
    scores = zg[:, :, list(spec.signal_features)] @ w
    scores[:, 0] = np.nan
    noise = rng.normal(size=(n, T))
    rel = spec.signal_strength * scores + spec.noise_sigma * noise
    labels = np.where(rel > 0, 1, -1)
    labels[:, 0] = 0

    mask = rng.random(size=raw.shape) < spec.missing_rate
    values = np.where(mask, np.nan, raw)
    panel = FundamentalsPanel(tickers, years, features, values)

    # announcements for fiscal years 1..T-1, inside Feb..Jun of the next calendar year
    lo, hi = ANNOUNCE_WINDOW
    span = (hi - lo).days
    offsets = rng.integers(0, span + 1, size=(n, T))
    announcements = {}
    for i, t in enumerate(tickers):
        for j in range(1, T):
            base = lo.replace(year=years[j] + 1)
            announcements[(t, years[j])] = base + dt.timedelta(days=int(offsets[i, j]))

    cal_start = np.datetime64(f"{years[1] + 1}-01-01")
    cal_end = np.datetime64(f"{years[-1] + 2}-01-01")
    days = np.arange(cal_start, cal_end, dtype="datetime64[D]")
    days = days[np.is_busday(days)]
    D = days.size

    index_steps = rng.normal(0.0003, 0.01, size=D)
    index_steps[0] = 0.0
    index_levels = 100.0 * np.exp(np.cumsum(index_steps))

    stock_steps = index_steps[None, :] + rng.normal(0.0, 0.015, size=(n, D))
    stock_steps[:, 0] = 0.0
    for i, t in enumerate(tickers):
        for j in range(1, T):
            start = announcements[(t, years[j])]
            d0 = _on_or_after(days, start)
            d1 = _on_or_after(days, add_months(start, 3))
            r_m = index_levels[d1] / index_levels[d0] - 1.0
            gross = 1.0 + r_m + rel[i, j]
            if gross <= 0:
                raise InvalidSpec("planted relative return implies a non-positive price")
            seg = slice(d0 + 1, d1 + 1)
            have = stock_steps[i, seg].sum()
            stock_steps[i, seg] += (np.log(gross) - have) / (d1 - d0)
    start_px = np.exp(rng.normal(np.log(50.0), 0.5, size=(n, 1)))
    closes = start_px * np.exp(np.cumsum(stock_steps, axis=1))
    prices = PriceTable(
        closes={t: (days.copy(), closes[i].copy()) for i, t in enumerate(tickers)},
        index_dates=days.copy(),
        index_levels=index_levels,
    )

    caps = {t: float(scale[i].mean() * 1e3) for i, t in enumerate(tickers)}
    meta = compute_meta(panel, caps, {t: True for t in tickers})
    return Universe(spec, panel, prices, meta, announcements, w, scores, rel, labels)


def bayes_accuracy(spec: SynthSpec, universe: Universe) -> float:
    """Agreement between sign(planted score) and the planted labels over labelled stock-years."""
    if universe.spec != spec:
        raise SpecMismatch("universe was generated from a different spec")
    s = universe.scores[:, 1:]
    lab = universe.planted_labels[:, 1:]
    guess = np.where(s > 0, 1, -1)
    return float(np.mean(guess == lab))
