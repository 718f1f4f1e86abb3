"""Feature cleaning, normalization, and smoothing for a fundamentals panel.

Stage order in :func:`run_preprocess`:

1. drop features whose missing fraction exceeds ``missing_threshold``
2. divide each (stock, feature) series by its base-year value
3. fill missing cells with the cross-sectional mean of that feature-year
4. z-score each feature-year across stocks
5. low-pass each (stock, feature) series in the cosine domain
6. truncate the smallest singular values of each year's stock x feature matrix
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .errors import AllFeaturesDropped, AllMissingSlice, BaseZero, EmptySignal, NonFiniteInput
from .ingest import FundamentalsPanel

log = logging.getLogger(__name__)

STAGES = ("drop_sparse", "base_year", "impute", "zscore", "smooth", "pca")


@dataclass(frozen=True)
class PreprocessConfig:
    missing_threshold: float = 0.05
    dct_width: int = 7
    pca_drop_fraction: float = 0.15
    apply_base_year: bool = True

    def __post_init__(self):
        if not 0.0 <= self.missing_threshold <= 1.0:
            raise ValueError("missing_threshold must lie in [0, 1]")
        if int(self.dct_width) != self.dct_width or self.dct_width < 1:
            raise ValueError("dct_width must be a positive integer")
        if not 0.0 <= self.pca_drop_fraction < 1.0:
            raise ValueError("pca_drop_fraction must lie in [0, 1)")


@dataclass
class StageRecord:
    name: str
    panel: FundamentalsPanel
    detail: dict = field(default_factory=dict)


def drop_sparse_features(panel: FundamentalsPanel, threshold: float,
                         dropped: list | None = None) -> FundamentalsPanel:
    """Remove features whose missing fraction over all stock-year cells exceeds ``threshold``.

    Names of removed features are appended to ``dropped`` when given.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    frac = panel.missing.mean(axis=(0, 1))
    keep = frac <= threshold
    if not keep.any():
        raise AllFeaturesDropped(f"all {len(keep)} features exceed missing threshold {threshold}")
    if dropped is not None:
        dropped.extend(f for f, k in zip(panel.features, keep) if not k)
    return panel.replace(
        values=panel.values[:, :, keep],
        features=tuple(f for f, k in zip(panel.features, keep) if k),
    )


def impute_mean(panel: FundamentalsPanel) -> FundamentalsPanel:
    values = panel.values.copy()
    miss = np.isnan(values)
    if not miss.any():
        return panel
    present = (~miss).sum(axis=0)
    if (present == 0).any():
        j, k = np.argwhere(present == 0)[0]
        raise AllMissingSlice(
            f"feature {panel.features[k]!r} has no values in year {panel.years[j]}")
    means = np.nansum(values, axis=0) / present
    idx = np.nonzero(miss)
    values[idx] = means[idx[1], idx[2]]
    return panel.replace(values=values)


def normalize_base_year(series) -> np.ndarray:
    """Divide a series by its first present value.

    >>> normalize_base_year([10.0, 20.0, 30.0]).tolist()
    [1.0, 2.0, 3.0]
    """
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise EmptySignal("empty series")
    present = np.flatnonzero(~np.isnan(series))
    if present.size == 0:
        return series.copy()
    base = series[present[0]]
    if base == 0:
        raise BaseZero("base-year value is zero")
    return series / base


def _base_year_panel(panel: FundamentalsPanel):
    values = panel.values
    out = np.empty_like(values)
    remarked = 0
    for i in range(values.shape[0]):
        for k in range(values.shape[2]):
            try:
                out[i, :, k] = normalize_base_year(values[i, :, k])
            except BaseZero:
                out[i, :, k] = np.nan
                remarked += 1
    return panel.replace(values=out), remarked


def zscore_per_year(panel: FundamentalsPanel) -> FundamentalsPanel:
    """Standardize each feature-year across stocks with the population std.

    Constant slices map to zeros.
    """
    values = panel.values
    if np.isnan(values).any():
        raise NonFiniteInput("z-scoring needs a fully imputed panel")
    mean = values.mean(axis=0, keepdims=True)
    centered = values - mean
    std = np.sqrt((centered ** 2).mean(axis=0, keepdims=True))
    safe = np.where(std > 0, std, 1.0)
    return panel.replace(values=np.where(std > 0, centered / safe, 0.0))


def dct_forward(f) -> np.ndarray:
    """Orthonormal DCT-II; the first coefficient carries weight 1/sqrt(N)."""
    f = np.asarray(f, dtype=np.float64)
    if f.size == 0:
        raise EmptySignal("cannot transform an empty signal")
    return fft.dct(f, type=2, norm="ortho", axis=-1)


def dct_inverse(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.size == 0:
        raise EmptySignal("cannot transform an empty signal")
    return fft.idct(F, type=2, norm="ortho", axis=-1)


def rect_filter(F, h: int) -> np.ndarray:
    """Keep the first ``h`` coefficients along the last axis, zero the rest."""
    if h < 1:
        raise ValueError("filter width must be >= 1")
    out = np.array(F, dtype=np.float64, copy=True)
    out[..., h:] = 0.0
    return out


def smooth_series(f, h: int) -> np.ndarray:
    """Low-pass a series (or a stack of series along the last axis)."""
    return dct_inverse(rect_filter(dct_forward(f), h))


def pca_denoise(X, drop_fraction: float) -> np.ndarray:
    """Zero the ``floor(drop_fraction * min(m, p))`` smallest singular values of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if not 0.0 <= drop_fraction < 1.0:
        raise ValueError("drop_fraction must lie in [0, 1)")
    if not np.isfinite(X).all():
        raise NonFiniteInput("pca_denoise input contains NaN or inf")
    r = min(X.shape)
    d = math.floor(drop_fraction * r)
    if d == 0:
        return X.copy()
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = r - d
    return (U[:, :keep] * s[:keep]) @ Vt[:keep]


def run_preprocess(panel: FundamentalsPanel, cfg: PreprocessConfig,
                   trace: list | None = None) -> FundamentalsPanel:
    """Run the full cleaning pipeline.

    When ``trace`` is a list, a :class:`StageRecord` is appended after every
    stage so callers can dump intermediate panels.
    """
    def record(name, p, **detail):
        log.info("preprocess %s: shape=%s %s", name, p.shape, detail or "")
        if trace is not None:
            trace.append(StageRecord(name, p, detail))

    dropped: list[str] = []
    p = drop_sparse_features(panel, cfg.missing_threshold, dropped)
    record("drop_sparse", p, dropped=dropped)

    if cfg.apply_base_year:
        p, remarked = _base_year_panel(p)
        record("base_year", p, remarked_missing=remarked)
    else:
        record("base_year", p, skipped=True)

    n_missing = int(p.missing.sum())
    p = impute_mean(p)
    record("impute", p, filled=n_missing)

    p = zscore_per_year(p)
    record("zscore", p)

    n_years = len(p.years)
    if cfg.dct_width < n_years:
        # time axis last so the transform runs along it
        series = np.moveaxis(p.values, 1, -1)
        smoothed = smooth_series(series, cfg.dct_width)
        p = p.replace(values=np.ascontiguousarray(np.moveaxis(smoothed, -1, 1)))
        record("smooth", p, width=cfg.dct_width)
    else:
        record("smooth", p, width=cfg.dct_width, skipped=True)

    if cfg.pca_drop_fraction > 0:
        values = np.empty_like(p.values)
        for j in range(n_years):
            values[:, j, :] = pca_denoise(p.values[:, j, :], cfg.pca_drop_fraction)
        p = p.replace(values=values)
        record("pca", p, drop_fraction=cfg.pca_drop_fraction)
    else:
        record("pca", p, skipped=True)
    return p
