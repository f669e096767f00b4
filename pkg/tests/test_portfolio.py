import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_series
from stresswalk.errors import (
    DegenerateAssets,
    EmptyGrid,
    EmptyJoin,
    InsufficientBucketData,
    WeightOutOfRange,
    ZeroBenchmarkVariance,
)
from stresswalk.estimators import grid_estimates
from stresswalk.portfolio import (
    CellParams,
    capm_regression,
    efficient_frontier,
    min_variance_weight,
    ols,
    portfolio_mixture_cdf,
    portfolio_moments,
)
from stresswalk.riskmodel import mixture_cdf_params
from stresswalk.simulate import KappaModel, Linear, RhoThreshold, SimConfig, simulate_joint

CALM = CellParams(mu_s=0.0008, mu_b=0.0002, sigma_s=0.008, sigma_b=0.003, rho=0.3)
STRESSED = CellParams(mu_s=-0.0005, mu_b=0.0003, sigma_s=0.025, sigma_b=0.005, rho=-0.5)


class TestMoments:
    def test_endpoints(self):
        assert portfolio_moments(CALM, 0.0) == (pytest.approx(0.0008), pytest.approx(0.008**2))
        assert portfolio_moments(CALM, 1.0) == (pytest.approx(0.0002), pytest.approx(0.003**2))

    def test_equal_uncorrelated_assets(self):
        c = CellParams(0.0, 0.0, 0.01, 0.01, 0.0)
        assert min_variance_weight(c) == pytest.approx(0.5)
        assert portfolio_moments(c, 0.5)[1] == pytest.approx(0.5e-4)

    def test_perfect_hedge(self):
        c = CellParams(0.0, 0.0, 0.01, 0.01, -1.0)
        assert portfolio_moments(c, 0.5)[1] == pytest.approx(0.0, abs=1e-20)

    def test_degenerate(self):
        with pytest.raises(DegenerateAssets):
            min_variance_weight(CellParams(0.0, 0.0, 0.01, 0.01, 1.0))

    def test_weight_range(self):
        with pytest.raises(WeightOutOfRange):
            portfolio_moments(CALM, 1.1)
        with pytest.raises(WeightOutOfRange):
            portfolio_moments(CALM, -0.1)

    def test_variance_is_parabola(self):
        w = np.linspace(0, 1, 11)
        _, var = portfolio_moments(CALM, w)
        d2 = np.diff(var, 2)
        assert np.allclose(d2, d2[0], rtol=1e-9)
        expected = 2 * 0.1**2 * (0.008**2 + 0.003**2 - 2 * 0.3 * 0.008 * 0.003)
        assert d2[0] == pytest.approx(expected, rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 0.1), st.floats(0, 0.1), st.floats(-1, 1))
    def test_variance_nonnegative(self, w, ss, sb, rho):
        _, var = portfolio_moments(CellParams(0.0, 0.0, ss, sb, rho), w)
        assert var >= 0.0


class TestFrontier:
    def test_grid_of_points(self):
        f = efficient_frontier(CALM, 0.1)
        assert [p.w for p in f.points] == pytest.approx(np.linspace(0, 1, 11).tolist())

    def test_min_variance_weight_formula(self):
        ss, sb, r = 0.008, 0.003, 0.3
        expected = (ss**2 - r * ss * sb) / (ss**2 + sb**2 - 2 * r * ss * sb)
        assert min_variance_weight(CALM) == pytest.approx(expected)
        w = np.linspace(0, 1, 100_001)
        assert w[np.argmin(portfolio_moments(CALM, w)[1])] == pytest.approx(expected, abs=1e-5)

    def test_efficient_arms(self):
        # calm: stock pays more, so the stock-heavy side is efficient
        calm = efficient_frontier(CALM)
        assert calm.points[0].efficient and not calm.points[-1].efficient
        # stressed: bond pays more, so the bond-heavy side is efficient
        stressed = efficient_frontier(STRESSED)
        assert stressed.points[-1].efficient and not stressed.points[0].efficient
        assert stressed.w_min_variance == pytest.approx(0.0006875 / 0.000775)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            efficient_frontier(CALM, 0.0)


def joint_pair(n=60_000, seed=2):
    cfg = SimConfig(n=n, seed=seed, kappa=KappaModel(20, 0.97, 0.1), sigma_fn=Linear(0, 0.0005),
                    kappa_b=KappaModel(90, 0.97, 0.08), sigma_b_fn=Linear(0, 0.00005),
                    rho_fn=RhoThreshold(threshold=25.0, above=-0.4, below=0.2), kappa_corr=0.3)
    return simulate_joint(cfg)


class TestGridMixture:
    def test_marginalises_to_stock_and_bond(self):
        a, b = joint_pair(20_000)
        g = grid_estimates(a, b)
        occ = g.occupied
        for x in (-0.03, -0.01, 0.0, 0.01):
            direct_s = mixture_cdf_params(g.joint_probability[occ], g.mu_s[occ], np.nan_to_num(g.sigma_s[occ]), x)
            direct_b = mixture_cdf_params(g.joint_probability[occ], g.mu_b[occ], np.nan_to_num(g.sigma_b[occ]), x / 4)
            assert abs(portfolio_mixture_cdf(g, 0.0, x) - direct_s) <= 1e-12
            assert abs(portfolio_mixture_cdf(g, 1.0, x / 4) - direct_b) <= 1e-12

    def test_matches_sampling(self):
        a, b = joint_pair(20_000)
        g = grid_estimates(a, b)
        # keep cells with a defined sigma so the sampler and the formula agree
        keep = g.count >= 2
        p = np.where(keep, g.joint_probability, 0.0)
        g = replace(g, joint_probability=p / p.sum())
        cells = np.argwhere(keep)
        rng = np.random.default_rng(0)
        n = 1_000_000
        pick = cells[rng.choice(len(cells), size=n, p=g.joint_probability[keep])]
        i, j = pick[:, 0], pick[:, 1]
        z1, z2 = rng.standard_normal((2, n))
        rho = g.rho[i, j]
        rs = g.mu_s[i, j] + g.sigma_s[i, j] * z1
        rb = g.mu_b[i, j] + g.sigma_b[i, j] * (rho * z1 + np.sqrt(1 - rho**2) * z2)
        w = 0.4
        draws = w * rb + (1 - w) * rs
        for x in (-0.02, -0.005, 0.0):
            pr = portfolio_mixture_cdf(g, w, x)
            assert abs(np.mean(draws < x) - pr) <= 3 * math.sqrt(pr * (1 - pr) / n)

    def test_cell_params(self):
        a, b = joint_pair(5000)
        g = grid_estimates(a, b)
        i, j = np.argwhere(g.count >= 2)[0]
        c = CellParams.from_grid(g, i, j)
        assert c.sigma_s == g.sigma_s[i, j]
        empty = np.argwhere(~g.occupied)
        if len(empty):
            with pytest.raises(EmptyGrid):
                CellParams.from_grid(g, *empty[0])


class TestCapm:
    def setup_data(self, n=30_000, seed=0):
        rng = np.random.default_rng(seed)
        k = rng.uniform(10, 50, n)
        x = rng.normal(0, 0.004 + k / 4000, n)
        return rng, k, x

    def test_recovers_beta(self):
        rng, k, x = self.setup_data()
        y = 0.0001 + 0.5 * x + rng.normal(0, 0.003, len(x))
        res = capm_regression(make_series(y, k), make_series(x, k), [10, 20, 30, 40])
        for r in res:
            assert r.beta == pytest.approx(0.5, abs=4 * 0.003 / (np.std(x) * math.sqrt(r.n)) + 0.02)
        # fixed idiosyncratic noise with rising benchmark sigma gives rising fit quality
        assert all(a.r_squared < b.r_squared for a, b in zip(res, res[1:]))
        assert sum(r.n for r in res) == len(x)

    def test_per_bucket_beta_at_5000(self):
        rng = np.random.default_rng(21)
        k = np.repeat([15.0, 25.0, 35.0], 5000)
        x = rng.normal(0, 0.004 + k / 4000)
        y = 0.5 * x + rng.normal(0, 0.004, len(x))
        for r in capm_regression(make_series(y, k), make_series(x, k), [10, 20, 30]):
            assert r.n == 5000
            assert abs(r.beta / 0.5 - 1) <= 0.05

    def test_self_regression_exact(self):
        rng, k, x = self.setup_data(3000, 2)
        s = make_series(x, k)
        for r in capm_regression(s, s, [10, 20, 30, 40]):
            assert (r.alpha, r.beta, r.r_squared) == (0.0, 1.0, 1.0)

    def test_alpha_shift(self):
        rng, k, x = self.setup_data(5000, 1)
        y = 0.7 * x + rng.normal(0, 0.002, len(x))
        base = capm_regression(make_series(y, k), make_series(x, k), [10, 30])
        moved = capm_regression(make_series(y + 0.001, k), make_series(x, k), [10, 30])
        for a, b in zip(base, moved):
            assert b.alpha - a.alpha == pytest.approx(0.001, abs=1e-12)
            assert b.beta == pytest.approx(a.beta, abs=1e-12)

    def test_exact_fit(self):
        x = np.array([0.01, -0.02, 0.005, 0.03])
        alpha, beta, r2 = ols(x, 0.002 + 1.5 * x)
        assert (alpha, beta, r2) == (pytest.approx(0.002), pytest.approx(1.5), pytest.approx(1.0))

    def test_errors(self):
        x = np.arange(10.0)
        with pytest.raises(InsufficientBucketData):
            capm_regression(make_series(x, np.full(10, 15.0)), make_series(x, np.full(10, 15.0)), [10, 20])
        with pytest.raises(ZeroBenchmarkVariance):
            capm_regression(make_series(x, np.full(10, 15.0)), make_series(np.ones(10), np.full(10, 15.0)), [10])
        with pytest.raises(EmptyJoin):
            capm_regression(make_series(x, x), make_series(x, x, start="1980-01-01"), [0])
