import numpy as np
import pytest

from stresswalk.estimators import EstimateTable
from stresswalk.ingest import LabeledSeries, kappa_changes

# S&P 500 half-sample table: VXO bucket, P (%), mu, sigma per day
SPX_EDGES = [0, 10, 20, 30, 40, 50, 60, 70]
SPX_P_PCT = [0.8, 52.3, 34.9, 8.5, 2.5, 0.2, 0.4, 0.3]
SPX_MU = [0.00288, 0.00097, 0.00052, 0.00010, -0.00495, -0.03426, 0.00598, -0.03952]
SPX_SIGMA = [0.00310, 0.00679, 0.01163, 0.01761, 0.02634, 0.04302, 0.05707, 0.04146]


@pytest.fixture
def spx_table():
    return EstimateTable.from_rows(SPX_EDGES, np.array(SPX_P_PCT) / 100, SPX_MU, SPX_SIGMA)


def make_series(returns, kappa, start="2001-01-01", **extra):
    returns = np.asarray(returns, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    dates = np.datetime64(start, "D") + np.arange(len(returns))
    return LabeledSeries(dates=dates, returns=returns, kappa=kappa, kappa_change=kappa_changes(kappa), **extra)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p
    return _write
