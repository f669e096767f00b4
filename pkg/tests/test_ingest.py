import math
import statistics

import numpy as np
import pytest

from stresswalk.errors import (
    EmptyJoin,
    InsufficientData,
    MalformedRow,
    MissingFile,
    NonMonotonicDate,
    NonPositivePrice,
    WindowTooLarge,
)
from stresswalk.ingest import (
    DatedSeries,
    PriceSeries,
    StressSeries,
    attach_volume,
    compute_log_returns,
    detrend_volume,
    label_with_stress,
    labeled_csv_text,
    parse_labeled_csv,
    parse_price_series,
    parse_stress_series,
    parse_volume_series,
)

D = lambda s: np.datetime64(s, "D")  # noqa: E731


def dates(*days):
    return np.array([D(d) for d in days])


def prices(*closes):
    return PriceSeries(D("2020-01-01") + np.arange(len(closes)), np.array(closes, dtype=float))


class TestParsePrices:
    def test_minimal(self, write_csv):
        p = write_csv("p.csv", "date,close\n2020-01-02,100\n2020-01-03,110\n")
        ps = parse_price_series(p)
        assert len(ps) == 2
        assert ps.closes.tolist() == [100.0, 110.0]

    def test_zero_close(self, write_csv):
        p = write_csv("p.csv", "date,close\n2020-01-02,100\n2020-01-03,0\n")
        with pytest.raises(NonPositivePrice) as exc:
            parse_price_series(p)
        assert exc.value.line == 3

    def test_duplicate_date(self, write_csv):
        p = write_csv("p.csv", "date,close\n2020-01-02,100\n2020-01-02,101\n")
        with pytest.raises(NonMonotonicDate) as exc:
            parse_price_series(p)
        assert exc.value.line == 3

    def test_line_numbers_survive_blank_lines(self, write_csv):
        p = write_csv("p.csv", "date,close\n2020-01-02,100\n\n2020-01-03,-1\n")
        with pytest.raises(NonPositivePrice) as exc:
            parse_price_series(p)
        assert exc.value.line == 4

    def test_bad_date(self, write_csv):
        p = write_csv("p.csv", "date,close\n02/01/2020,100\n")
        with pytest.raises(MalformedRow) as exc:
            parse_price_series(p)
        assert exc.value.line == 2

    def test_thousands_separator_rejected(self, write_csv):
        p = write_csv("p.csv", 'date,close\n2020-01-02,"1,100"\n')
        with pytest.raises(MalformedRow):
            parse_price_series(p)

    def test_wrong_header(self, write_csv):
        p = write_csv("p.csv", "day,price\n2020-01-02,100\n")
        with pytest.raises(MalformedRow) as exc:
            parse_price_series(p)
        assert exc.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            parse_price_series(tmp_path / "nope.csv")


class TestLogReturns:
    def test_ten_percent(self):
        r = compute_log_returns(prices(100, 110))
        assert r.values[0] == pytest.approx(0.0953102, abs=1e-7)
        assert r.dates[0] == D("2020-01-02")

    def test_flat(self):
        assert compute_log_returns(prices(100, 100)).values.tolist() == [0.0]

    def test_round_trip(self):
        r = compute_log_returns(prices(100, 50, 100)).values
        assert r == pytest.approx([-0.693147, 0.693147], abs=1e-6)
        assert r.sum() == 0.0

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            compute_log_returns(prices(100))

    def test_cumulative_reconstructs_ratio(self):
        rng = np.random.default_rng(3)
        closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, 500)))
        r = compute_log_returns(prices(*closes)).values
        assert abs(math.exp(r.sum()) / (closes[-1] / closes[0]) - 1) < 1e-12


class TestLabel:
    def stress(self, days, kappa):
        return StressSeries(dates(*days), np.array(kappa, dtype=float))

    def test_full_overlap(self):
        ret = DatedSeries(dates("2020-01-02", "2020-01-03"), np.array([0.01, -0.02]))
        s, rep = label_with_stress(ret, self.stress(["2020-01-02", "2020-01-03"], [20, 25]))
        assert len(s) == 2 and rep.n_dropped == 0
        assert s.kappa_change[1] == pytest.approx(0.25)
        assert math.isnan(s.kappa_change[0])

    def test_partial_overlap(self):
        ret = DatedSeries(dates("2020-01-02", "2020-01-03"), np.array([0.01, -0.02]))
        s, rep = label_with_stress(ret, self.stress(["2020-01-03"], [25]))
        assert len(s) == 1 and rep.n_dropped == 1
        assert rep.dropped_return_dates[0].isoformat() == "2020-01-02"
        assert s.returns[0] == -0.02 and s.kappa[0] == 25

    def test_strict_join_refuses_drops(self):
        ret = DatedSeries(dates("2020-01-02", "2020-01-03"), np.array([0.01, -0.02]))
        with pytest.raises(EmptyJoin):
            label_with_stress(ret, self.stress(["2020-01-03"], [25]), join="strict")

    def test_no_overlap(self):
        ret = DatedSeries(dates("2020-01-02"), np.array([0.01]))
        with pytest.raises(EmptyJoin):
            label_with_stress(ret, self.stress(["2020-01-05"], [25]))

    def test_change_uses_previous_joined_row(self):
        # 2020-01-03 is missing from returns, so the change at 01-06 is against 01-02
        ret = DatedSeries(dates("2020-01-02", "2020-01-06"), np.array([0.0, 0.0]))
        st = self.stress(["2020-01-02", "2020-01-03", "2020-01-06"], [20, 40, 30])
        s, _ = label_with_stress(ret, st)
        assert s.kappa_change[1] == pytest.approx(0.5)

    def test_constant_kappa_zero_change(self):
        n = 30
        ds = D("2020-01-01") + np.arange(n)
        s, _ = label_with_stress(DatedSeries(ds, np.zeros(n)), StressSeries(ds, np.full(n, 17.0)))
        assert np.all(s.kappa_change[1:] == 0.0)

    def test_output_dates_subset(self):
        rng = np.random.default_rng(0)
        all_days = D("2020-01-01") + np.arange(200)
        rd = np.sort(rng.choice(all_days, 120, replace=False))
        sd = np.sort(rng.choice(all_days, 150, replace=False))
        s, _ = label_with_stress(DatedSeries(rd, np.zeros(120)), StressSeries(sd, np.ones(150)))
        assert set(s.dates) <= set(rd) and set(s.dates) <= set(sd)
        assert np.all(np.isfinite(s.kappa))


def trailing_median_oracle(v, window):
    return [v[t] / statistics.median(v[t - window:t]) for t in range(window, len(v))]


class TestDetrend:
    def series(self, v):
        return DatedSeries(D("2020-01-01") + np.arange(len(v)), np.asarray(v, dtype=float))

    def test_constant(self):
        out = detrend_volume(self.series([5.0] * 20), window=5)
        assert len(out) == 15
        assert np.all(out.values == 1.0)

    def test_final_day_doubled(self):
        v = [7.0] * 20
        v[-1] = 14.0
        assert detrend_volume(self.series(v), window=10).values[-1] == 2.0

    def test_linear_growth_against_brute_force(self):
        v = [100.0 + 3 * t for t in range(40)]
        out = detrend_volume(self.series(v), window=6)
        assert out.values == pytest.approx(trailing_median_oracle(v, 6), rel=1e-14)
        # even window: median of 100,103,...,115 = (106 + 109) / 2
        assert out.values[0] == pytest.approx(118 / 107.5, rel=1e-14)

    def test_window_guards(self):
        with pytest.raises(WindowTooLarge):
            detrend_volume(self.series([1.0] * 5), window=5)
        with pytest.raises(WindowTooLarge):
            detrend_volume(self.series([1.0] * 5), window=1)


class TestLabeledCsv:
    def test_round_trip(self, write_csv):
        text = ("date,return,kappa,kappa2,volume\n"
                "2020-01-02,0.01,20,80,1000\n2020-01-03,-0.02,25,90,\n2020-01-06,0.0,22.5,85,1200\n")
        s = parse_labeled_csv(write_csv("lab.csv", text))
        assert len(s) == 3
        assert s.kappa_change[1] == pytest.approx(0.25)
        assert math.isnan(s.volume[1])
        again = parse_labeled_csv(write_csv("again.csv", labeled_csv_text(s)))
        assert np.array_equal(again.returns, s.returns)
        assert np.array_equal(again.kappa2, s.kappa2)
        obs = list(again)
        assert obs[1].volume is None and obs[2].volume == 1200.0

    def test_volume_file_and_attach(self, write_csv):
        vol = parse_volume_series(write_csv("v.csv", "date,volume\n2020-01-02,10\n2020-01-03,20\n"))
        st = parse_stress_series(write_csv("s.csv", "date,kappa\n2020-01-03,20\n2020-01-06,21\n"))
        s, _ = label_with_stress(DatedSeries(st.dates, np.array([0.0, 0.01])), st)
        s = attach_volume(s, volume=vol)
        assert s.volume[0] == 20.0 and math.isnan(s.volume[1])

    def test_negative_kappa(self, write_csv):
        with pytest.raises(MalformedRow):
            parse_stress_series(write_csv("s.csv", "date,kappa\n2020-01-03,-1\n"))
