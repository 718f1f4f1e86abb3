import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fundsvm.ingest import FundamentalsPanel  # noqa: E402
from fundsvm.synth import SynthSpec, generate_universe  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20140602)


@pytest.fixture
def small_panel():
    # 3 stocks x 4 years x 2 features, values encode (stock, year, feature)
    tickers = ("AAA", "BBB", "CCC")
    years = (2010, 2011, 2012, 2013)
    features = ("rev", "inc")
    values = np.empty((3, 4, 2))
    for i in range(3):
        for j in range(4):
            for k in range(2):
                values[i, j, k] = 100 * (i + 1) + 10 * j + k
    return FundamentalsPanel(tickers, years, features, values)


@pytest.fixture(scope="session")
def small_universe():
    spec = SynthSpec(n_stocks=30, n_years=12, n_features=6, signal_features=(0, 1),
                     missing_rate=0.0, seed=7)
    return generate_universe(spec)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[ACCEPTANCE_KEY] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    # the call phase decides the outcome; a failing fixture setup also counts as FAIL
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    item.config.stash[ACCEPTANCE_KEY].append(
        (marker.args[0], marker.args[1], "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash.get(ACCEPTANCE_KEY, []), key=lambda r: r[0])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, detail in rows:
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else ""))
