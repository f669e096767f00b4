"""Normal-mixture CDF over stress buckets and the risk measures built on it.

The mixture CDF is

    CDF(x0) = sum_i P_i * Phi((x0 - mu_i) / sigma_i)

summed over populated buckets ``i``.  Tail terms go through the
complementary error function, so probabilities as small as 1e-80 keep their
relative precision.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySelection, EmptyTable, InvalidInterval, NegativeHorizon, ZeroVariance
from .estimators import EstimateTable
from .normal import normal_cdf


def pct_to_log_return(pct: float) -> float:
    """Convert a simple percentage move (e.g. ``-9``) to a log return."""
    return math.log1p(pct / 100.0)


def mixture_cdf_params(p, mu, sigma, x0: float) -> float:
    """Mixture CDF from raw weight/mean/sigma arrays.

    Components with zero weight are skipped.  A component with ``sigma == 0``
    (or undefined sigma from a single observation) is a point mass at its mean.
    """
    p = np.asarray(p, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).ravel()
    use = p > 0
    if not np.any(use):
        raise EmptyTable("no populated components")
    p, mu, sigma = p[use], mu[use], sigma[use]
    point = ~(sigma > 0)
    total = 0.0
    if np.any(~point):
        total += float(np.sum(p[~point] * normal_cdf((x0 - mu[~point]) / sigma[~point])))
    if np.any(point):
        total += float(np.sum(p[point] * (x0 >= mu[point])))
    return min(total, 1.0)


def mixture_cdf(table: EstimateTable, x0: float) -> float:
    """Probability of a one-day return below ``x0`` under the bucket mixture."""
    return mixture_cdf_params(table.probability, table.mu, table.sigma, x0)


def interval_probability(table: EstimateTable, a: float, b: float) -> float:
    """Probability of a return in ``[a, b)``."""
    if not a < b:
        raise InvalidInterval(f"need a < b, got ({a}, {b})")
    return max(mixture_cdf(table, b) - mixture_cdf(table, a), 0.0)


def _selection(table: EstimateTable, kappa_min: float, kappa_max: float) -> np.ndarray:
    sel = table.select(kappa_min, kappa_max) & table.populated
    if not np.any(sel):
        raise EmptySelection(f"no populated bucket inside kappa in [{kappa_min}, {kappa_max}]")
    return sel


def conditional_cdf(table: EstimateTable, x0: float, kappa_min: float = -math.inf,
                    kappa_max: float = math.inf) -> float:
    """Mixture CDF restricted to buckets inside ``[kappa_min, kappa_max]``.

    Bucket weights are renormalised over the selection.
    """
    sel = _selection(table, kappa_min, kappa_max)
    if np.all(sel == table.populated):
        return mixture_cdf(table, x0)
    p = table.probability[sel]
    return mixture_cdf_params(p / p.sum(), table.mu[sel], table.sigma[sel], x0)


@dataclass(frozen=True)
class MixtureMoments:
    mean: float
    variance: float
    excess_kurtosis: float

    @property
    def stddev(self) -> float:
        return math.sqrt(self.variance)


def mixture_moments(table: EstimateTable) -> MixtureMoments:
    """Mean, variance and excess kurtosis of the normal mixture (law of total moments)."""
    use = table.populated
    if not np.any(use):
        raise EmptyTable("table has no populated bucket")
    p = table.probability[use]
    mu = table.mu[use]
    s2 = np.nan_to_num(table.sigma[use]) ** 2
    mean = float(p @ mu)
    d = mu - mean
    var = float(p @ (d * d + s2))
    m4 = float(p @ (d**4 + 6.0 * d * d * s2 + 3.0 * s2 * s2))
    kurt = m4 / var**2 - 3.0 if var > 0 else math.nan
    return MixtureMoments(mean, var, kurt)


def _moments_of(source) -> tuple[float, float]:
    if isinstance(source, MixtureMoments):
        return source.mean, source.variance
    if isinstance(source, EstimateTable):
        m = mixture_moments(source)
        return m.mean, m.variance
    x = np.asarray(source, dtype=float)
    if len(x) < 2:
        raise ZeroVariance("need at least two returns")
    return float(x.mean()), float(x.var(ddof=1))


def normal_fit_cdf(source, x0: float) -> float:
    """CDF of a single normal matched to the mean and variance of ``source``.

    ``source`` is a :class:`MixtureMoments`, an :class:`EstimateTable` or a
    sample of returns.
    """
    mean, var = _moments_of(source)
    if not var > 0:
        raise ZeroVariance("normal fit needs positive variance")
    return normal_cdf((x0 - mean) / math.sqrt(var))


def expected_n_day_return(table: EstimateTable, horizon: int) -> float:
    """Accumulated expected return over ``horizon`` days, ``N * sum_i P_i mu_i``."""
    if horizon < 0:
        raise NegativeHorizon(f"horizon must be >= 0, got {horizon}")
    if not np.any(table.populated):
        raise EmptyTable("table has no populated bucket")
    use = table.populated
    return horizon * float(table.probability[use] @ table.mu[use])


def loss_probability_pn(table: EstimateTable, horizon: int) -> float:
    """Probability that a single day loses more than ``horizon`` days of expected return."""
    if horizon < 1:
        raise NegativeHorizon(f"horizon must be >= 1, got {horizon}")
    return mixture_cdf(table, -expected_n_day_return(table, horizon))


def sharpe_ratio(source, risk_free: float = 0.0) -> float:
    """Per-day Sharpe ratio ``(mean - risk_free) / stddev``."""
    mean, var = _moments_of(source)
    if not var > 0:
        raise ZeroVariance("Sharpe ratio needs positive variance")
    return (mean - risk_free) / math.sqrt(var)


@dataclass
class RiskReport:
    """Tail probability for one threshold plus optional horizon metrics."""

    x0: float
    mixture_probability: float
    normal_fit_probability: float | None = None
    conditioning: str = "none"
    horizon: int | None = None
    r_n: float | None = None
    p_n: float | None = None
    risk_free: float = 0.0
    sharpe: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def risk_report(table: EstimateTable, x0: float, horizon: int | None = None,
                kappa_min: float | None = None, risk_free: float = 0.0) -> RiskReport:
    """Evaluate the mixture, the matched normal and (optionally) r_N, P_N at ``x0``.

    With ``kappa_min`` the mixture probability is conditioned on buckets at or
    above that stress level; the normal fit always uses the full table.
    """
    moments = mixture_moments(table)
    if kappa_min is None:
        prob = mixture_cdf(table, x0)
        cond = "none"
    else:
        prob = conditional_cdf(table, x0, kappa_min=kappa_min)
        cond = f"kappa>={kappa_min:g}"
    rep = RiskReport(
        x0=x0,
        mixture_probability=prob,
        normal_fit_probability=normal_fit_cdf(moments, x0),
        conditioning=cond,
        risk_free=risk_free,
        sharpe=sharpe_ratio(moments, risk_free),
    )
    if horizon is not None:
        rep.horizon = horizon
        rep.r_n = expected_n_day_return(table, horizon)
        rep.p_n = loss_probability_pn(table, horizon)
    return rep


def empirical_bracket_frequencies(returns, brackets: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Counts of returns per bracket, with open-ended outer brackets.

    ``brackets`` are the interior cut points; ``len(brackets) + 1`` bins result.
    """
    cuts = np.asarray(brackets, dtype=float)
    idx = np.searchsorted(cuts, np.asarray(returns, dtype=float), side="right")
    counts = np.bincount(idx, minlength=len(cuts) + 1)
    return counts, counts / counts.sum()


def bracket_probabilities(table: EstimateTable, brackets: Sequence[float]) -> np.ndarray:
    """Mixture probability mass in each bracket defined by ``brackets``."""
    cdf = np.array([0.0] + [mixture_cdf(table, b) for b in brackets] + [1.0])
    return np.clip(np.diff(cdf), 0.0, None)


def default_brackets(width: float = 0.005, limit: float = 0.05) -> np.ndarray:
    """Fixed-width return cut points on ``[-limit, limit]``."""
    k = int(round(limit / width))
    return np.arange(-k, k + 1) * width


@dataclass(frozen=True)
class BracketRow:
    low: float
    high: float
    predicted: float
    observed: float
    normal_fit: float
    count: int
    n: int

    @property
    def z_score(self) -> float:
        """Observed minus predicted frequency in binomial standard errors."""
        se = math.sqrt(self.predicted * (1.0 - self.predicted) / self.n)
        if se == 0.0:
            return 0.0 if self.observed == self.predicted else math.inf
        return (self.observed - self.predicted) / se


def bracket_comparison(table: EstimateTable, returns, brackets: Sequence[float]) -> list[BracketRow]:
    """Predicted (mixture), matched-normal and observed frequencies per return bracket.

    This is the out-of-sample check: ``table`` is estimated on one half of
    the data and ``returns`` come from the other half.
    """
    returns = np.asarray(returns, dtype=float)
    cuts = np.asarray(brackets, dtype=float)
    counts, observed = empirical_bracket_frequencies(returns, cuts)
    predicted = bracket_probabilities(table, cuts)
    moments = mixture_moments(table)
    ncdf = np.array([0.0] + [normal_fit_cdf(moments, c) for c in cuts] + [1.0])
    normal = np.diff(ncdf)
    lows = np.append(-np.inf, cuts)
    highs = np.append(cuts, np.inf)
    n = len(returns)
    return [BracketRow(float(lows[i]), float(highs[i]), float(predicted[i]), float(observed[i]),
                       float(normal[i]), int(counts[i]), n) for i in range(len(lows))]
