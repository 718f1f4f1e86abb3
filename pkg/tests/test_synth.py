import math

import numpy as np
import pytest

from fundsvm.dataset import compute_labels
from fundsvm.errors import InvalidSpec, SpecMismatch
from fundsvm.synth import SynthSpec, bayes_accuracy, generate_universe


class TestSpec:
    def test_defaults(self):
        s = SynthSpec()
        assert s.prediction_year == 2014 and len(s.years) == 12

    @pytest.mark.parametrize("kwargs", [
        {"n_stocks": 1}, {"signal_features": ()}, {"signal_features": (12,)},
        {"signal_features": (0, 0)}, {"noise_sigma": -1.0}, {"missing_rate": 1.5}, {"seed": -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidSpec):
            SynthSpec(**kwargs)


class TestUniverse:
    def test_shapes(self, small_universe):
        u = small_universe
        assert u.panel.shape == (30, 12, 6)
        assert len(u.announcements) == 30 * 11
        assert set(u.meta) == set(u.panel.tickers)
        assert np.isclose(np.linalg.norm(u.weights), 1.0)

    def test_announcement_window(self, small_universe):
        for (_, fy), date in small_universe.announcements.items():
            assert date.year == fy + 1 and 2 <= date.month <= 6

    def test_deterministic(self):
        spec = SynthSpec(n_stocks=10, n_years=8, n_features=4, seed=3)
        a, b = generate_universe(spec), generate_universe(spec)
        assert a.panel.equals(b.panel)
        assert np.array_equal(a.relative_returns, b.relative_returns, equal_nan=True)
        assert a.announcements == b.announcements
        c = generate_universe(SynthSpec(n_stocks=10, n_years=8, n_features=4, seed=4))
        assert not c.panel.equals(a.panel)

    def test_noise_free_labels_follow_score(self):
        spec = SynthSpec(n_stocks=40, n_years=8, n_features=5, noise_sigma=0.0, seed=1)
        u = generate_universe(spec)
        assert bayes_accuracy(spec, u) == 1.0
        labels = compute_labels(u.prices, u.announcements, 3)
        for key, (lab, rel) in u.planted().items():
            assert labels[key].label == lab
            assert labels[key].relative_return == pytest.approx(rel, abs=1e-9)

    def test_no_signal_is_coin_flip(self):
        spec = SynthSpec(n_stocks=200, n_years=8, n_features=5, signal_strength=0.0, seed=2)
        assert abs(bayes_accuracy(spec, generate_universe(spec)) - 0.5) < 0.05

    def test_missing_rate(self):
        spec = SynthSpec(n_stocks=100, n_years=10, n_features=10, missing_rate=0.1, seed=5)
        panel = generate_universe(spec).panel
        cells = panel.values.size
        assert abs(np.isnan(panel.values).mean() - 0.1) <= 2 / math.sqrt(cells)

    def test_spec_mismatch(self, small_universe):
        with pytest.raises(SpecMismatch):
            bayes_accuracy(SynthSpec(), small_universe)
