import datetime as dt

import numpy as np
import pytest

from fundsvm.dataset import (
    LabelRecord,
    WindowSpec,
    add_months,
    build_prediction_set,
    build_training_set,
    build_window,
    compute_label,
    compute_labels,
    random_partition,
    train_size,
)
from fundsvm.errors import InsufficientHistory, InsufficientPriceHistory, InvalidRatio, TooFewRows
from fundsvm.ingest import FundamentalsPanel, PriceTable
from fundsvm.pipeline import prepare_data
from fundsvm.preprocess import PreprocessConfig
from fundsvm.ingest import UniverseRules


def d64(*dates):
    return np.array(dates, dtype="datetime64[D]")


@pytest.fixture
def prices():
    # announcement on Sat 2013-03-02 resolves to Mon 03-04; end 06-02 (Sun) resolves to 06-03
    dates = d64("2013-03-01", "2013-03-04", "2013-05-15", "2013-06-03", "2013-06-10")
    return PriceTable(
        closes={
            "UP": (dates, np.array([9.0, 10.0, 10.8, 11.5, 12.0])),
            "FLAT": (dates, np.array([9.0, 10.0, 10.2, 10.5, 10.0])),
            "SHORT": (dates[:3], np.array([9.0, 10.0, 10.8])),
        },
        index_dates=dates,
        index_levels=np.array([99.0, 100.0, 102.0, 105.0, 103.0]),
    )


class TestAddMonths:
    @pytest.mark.parametrize("start,months,expected", [
        (dt.date(2013, 3, 2), 3, dt.date(2013, 6, 2)),
        (dt.date(2013, 1, 31), 1, dt.date(2013, 2, 28)),
        (dt.date(2012, 1, 31), 1, dt.date(2012, 2, 29)),
        (dt.date(2013, 11, 30), 3, dt.date(2014, 2, 28)),
        (dt.date(2013, 12, 15), 12, dt.date(2014, 12, 15)),
    ])
    def test_examples(self, start, months, expected):
        assert add_months(start, months) == expected


class TestLabels:
    def test_bullish(self, prices):
        label, rel = compute_label(prices, "UP", dt.date(2013, 3, 2), 3)
        assert label == 1
        assert rel == pytest.approx(0.15 - 0.05, abs=1e-12)

    def test_exact_tie_is_bearish(self, prices):
        label, rel = compute_label(prices, "FLAT", dt.date(2013, 3, 2), 3)
        assert rel == 0.0 and label == -1

    def test_insufficient_history(self, prices):
        with pytest.raises(InsufficientPriceHistory):
            compute_label(prices, "SHORT", dt.date(2013, 3, 2), 3)
        with pytest.raises(InsufficientPriceHistory):
            compute_label(prices, "NOPE", dt.date(2013, 3, 2), 3)

    def test_compute_labels_keys_and_skips(self, prices):
        ann = {("UP", 2012): dt.date(2013, 3, 2), ("SHORT", 2012): dt.date(2013, 3, 2),
               ("FLAT", 2012): dt.date(2013, 3, 2)}
        out = compute_labels(prices, ann, 3)
        assert set(out) == {("UP", 2013), ("FLAT", 2013)}
        rec = out[("UP", 2013)]
        assert rec.stock_return == pytest.approx(0.15) and rec.index_return == pytest.approx(0.05)

    def test_agrees_with_planted(self, small_universe):
        u = small_universe
        labels = compute_labels(u.prices, u.announcements, 3)
        planted = u.planted()
        assert set(labels) == set(planted)
        for key, (lab, rel) in planted.items():
            assert labels[key].label == lab
            assert labels[key].relative_return == pytest.approx(rel, abs=1e-9)


class TestWindows:
    def test_order(self, small_panel):
        w = build_window(small_panel, "BBB", 2013, 2)
        assert w.tolist() == [220, 221, 210, 211]

    def test_lookback_one_is_previous_year(self, small_panel):
        w = build_window(small_panel, "CCC", 2012, 1)
        assert np.array_equal(w, small_panel.values[2, 1, :])

    def test_outside_panel(self, small_panel):
        with pytest.raises(InsufficientHistory):
            build_window(small_panel, "AAA", 2013, 4)
        with pytest.raises(InsufficientHistory):
            build_window(small_panel, "AAA", 2015, 1)

    @pytest.mark.parametrize("k,L", [(52, 5), (3, 1), (7, 4)])
    def test_shape(self, k, L):
        years = tuple(range(2000, 2000 + L + 2))
        panel = FundamentalsPanel(("A", "B"), years, tuple(f"f{i}" for i in range(k)),
                                  np.zeros((2, len(years), k)))
        spec = WindowSpec(prediction_year=years[-1] + 1, lookback=L, train_years=2)
        labels = {(t, s): LabelRecord(1, 0.1, 0.1, 0.0) for t in "AB" for s in spec.label_years}
        X, y = build_training_set(panel, labels, spec)
        assert X.shape == (4, k * L) and len(y) == 4
        assert build_prediction_set(panel, spec).shape == (2, k * L)


class TestTrainingSet:
    def test_row_order_and_content(self, small_panel):
        spec = WindowSpec(prediction_year=2014, lookback=2, train_years=2)
        labels = {}
        for n, t in enumerate(small_panel.tickers):
            for s in (2012, 2013):
                labels[(t, s)] = LabelRecord(1 if (n + s) % 2 else -1, n + s / 1e4, 0.0, 0.0)
        X, y = build_training_set(small_panel, labels, spec)
        expected_rows = [(t, s) for t in ("AAA", "BBB", "CCC") for s in (2013, 2012)]
        assert list(X.row_index) == expected_rows == list(y.row_index)
        for r, (t, s) in enumerate(expected_rows):
            assert np.array_equal(X.values[r], build_window(small_panel, t, s, 2))
            assert y.labels[r] == labels[(t, s)].label
            assert y.relative_returns[r] == labels[(t, s)].relative_return
        assert X.columns[:3] == ((1, "rev"), (1, "inc"), (2, "rev"))

    def test_missing_label(self, small_panel):
        spec = WindowSpec(prediction_year=2014, lookback=2, train_years=2)
        with pytest.raises(InsufficientPriceHistory):
            build_training_set(small_panel, {}, spec)

    def test_coverage(self, small_panel):
        with pytest.raises(InsufficientHistory):
            build_training_set(small_panel, {}, WindowSpec(2014, lookback=3, train_years=2))

    def test_no_look_ahead(self, small_panel):
        spec = WindowSpec(prediction_year=2013, lookback=1, train_years=2)
        labels = {(t, s): LabelRecord(1, 0.1, 0.1, 0.0) for t in small_panel.tickers for s in (2011, 2012)}
        X, _ = build_training_set(small_panel, labels, spec)
        P = build_prediction_set(small_panel, spec)
        values = small_panel.values.copy()
        values[:, 3, :] = -999.0  # year 2013, the prediction year itself
        altered = small_panel.replace(values=values)
        X2, _ = build_training_set(altered, labels, spec)
        assert np.array_equal(X.values, X2.values)
        assert np.array_equal(P.values, build_prediction_set(altered, spec).values)


class TestPipelineLookAhead:
    def test_later_fundamentals_do_not_leak(self, small_universe):
        u = small_universe
        t = u.spec.years[-1]
        spec = WindowSpec(prediction_year=t)
        rules = UniverseRules(drop_smallest_cap=0)
        cfg = PreprocessConfig()
        base = prepare_data(u.panel, u.meta, rules, u.prices, u.announcements, cfg, spec)
        values = u.panel.values.copy()
        values[:, -1, :] *= 3.0
        altered = prepare_data(u.panel.replace(values=values), u.meta, rules, u.prices,
                               u.announcements, cfg, spec)
        assert np.array_equal(base.X_train.values, altered.X_train.values)
        assert np.array_equal(base.X_pred.values, altered.X_pred.values)
        assert base.X_train.shape == (30 * 5, 6 * 5)


class TestPartition:
    def test_sizes(self):
        p = random_partition(10, 0.9, 1)
        assert len(p.train_rows) == 9 and len(p.holdout_rows) == 1

    @pytest.mark.parametrize("n,ratio,expected", [(5, 0.5, 3), (7, 0.5, 4), (10, 0.25, 3), (4300, 0.9, 3870)])
    def test_round_half_up(self, n, ratio, expected):
        assert train_size(n, ratio) == expected

    def test_disjoint_cover_and_deterministic(self):
        a = random_partition(57, 0.7, 123)
        b = random_partition(57, 0.7, 123)
        assert np.array_equal(a.train_rows, b.train_rows)
        rows = np.concatenate([a.train_rows, a.holdout_rows])
        assert sorted(rows.tolist()) == list(range(57))
        c = random_partition(57, 0.7, 124)
        assert not np.array_equal(a.train_rows, c.train_rows)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1, 1.5])
    def test_invalid_ratio(self, ratio):
        with pytest.raises(InvalidRatio):
            random_partition(10, ratio, 0)

    def test_too_few(self):
        with pytest.raises(TooFewRows):
            random_partition(1, 0.5, 0)
        with pytest.raises(TooFewRows):
            random_partition(3, 0.9, 0)
