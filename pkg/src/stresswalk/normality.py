"""Shapiro-Wilk testing, moment diagnostics and sigma(kappa) rescaling."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import SampleTooLarge, SampleTooSmall, StressWalkError, UnpopulatedBucket, ZeroVariance
from .estimators import EstimateTable, SampleSet
from .ingest import Observations
from .normal import normal_quantile, normal_sf

log = logging.getLogger(__name__)

SW_MIN_N = 3
SW_MAX_N = 5000

# Royston (1995) AS R94 polynomial coefficients
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef: Sequence[float], x: float) -> float:
    out = 0.0
    for c in reversed(coef):
        out = out * x + c
    return out


@dataclass(frozen=True)
class NormalityResult:
    w_statistic: float
    p_value: float
    n: int


def shapiro_wilk_coefficients(n: int) -> np.ndarray:
    """Antisymmetric weight vector ``a`` (ascending order statistics) for sample size ``n``."""
    if n < SW_MIN_N:
        raise SampleTooSmall(f"Shapiro-Wilk needs n >= {SW_MIN_N}, got {n}")
    if n > SW_MAX_N:
        raise SampleTooLarge(f"Shapiro-Wilk is calibrated for n <= {SW_MAX_N}, got {n}")
    half = n // 2
    if n == 3:
        upper = np.array([math.sqrt(0.5)])
    else:
        an25 = n + 0.25
        # m[i] < 0: expected values of the lower order statistics
        m = np.array([normal_quantile((i + 1 - 0.375) / an25) for i in range(half)])
        summ2 = 2.0 * float(m @ m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_C1, rsn) - m[0] / ssumm2
        upper = np.empty(half)
        if n > 5:
            a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2))
            upper[1] = a2
            upper[2:] = -m[2:] / fac
        else:
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
            upper[1:] = -m[1:] / fac
        upper[0] = a1
    a = np.zeros(n)
    a[:half] = -upper
    a[n - half:] = upper[::-1]
    return a


def _sw_pvalue(w: float, n: int) -> float:
    if n == 3:
        # exact for n = 3
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return min(max(p, 0.0), 1.0)
    y = math.log(1.0 - w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return 1e-99
        y = -math.log(gamma - y)
        m = _poly(_C3, n)
        s = math.exp(_poly(_C4, n))
    else:
        ln_n = math.log(n)
        m = _poly(_C5, ln_n)
        s = math.exp(_poly(_C6, ln_n))
    if math.isinf(y):
        return 1.0
    return min(max(normal_sf((y - m) / s), 0.0), 1.0)


def shapiro_wilk(sample) -> NormalityResult:
    """Shapiro-Wilk W and its p-value (Royston's AS R94 approximation).

    Valid for ``3 <= n <= 5000``.  W is computed on the sample scaled by its
    range, which makes it exactly invariant to affine transformations up to
    rounding.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    a = shapiro_wilk_coefficients(n)
    rng = x[-1] - x[0]
    if not rng > 0:
        raise ZeroVariance("all sample values are identical")
    x = (x - x[0]) / rng
    ssq = float(np.sum((x - x.mean()) ** 2))
    w = float(a @ x) ** 2 / ssq
    w = min(w, 1.0)
    if n == 3:
        w = max(w, 0.75)
    return NormalityResult(w, _sw_pvalue(w, n), n)


@dataclass
class RejectionSummary:
    fraction: float
    n_tested: int
    n_rejected: int
    alpha: float
    excluded: list[tuple[int, str]] = field(default_factory=list)
    results: list[tuple[SampleSet, NormalityResult]] = field(default_factory=list)


def pvalue_rejection_fraction(sets: Sequence[SampleSet], alpha: float = 0.05) -> RejectionSummary:
    """Fraction of sets whose Shapiro-Wilk p-value falls below ``alpha``.

    Sets the test cannot handle (size, zero variance) are skipped and listed
    in ``excluded`` with the error name.
    """
    results = []
    excluded = []
    for s in sets:
        try:
            results.append((s, shapiro_wilk(s.returns)))
        except StressWalkError as exc:
            excluded.append((s.index, type(exc).__name__))
    if excluded:
        log.warning("%d sets excluded from the Shapiro-Wilk summary", len(excluded))
    rejected = sum(r.p_value < alpha for _, r in results)
    frac = rejected / len(results) if results else math.nan
    return RejectionSummary(frac, len(results), rejected, alpha, excluded, results)


def excess_kurtosis(sample) -> float:
    """Sample excess kurtosis ``m4 / m2**2 - 3`` (population moments, no bias correction)."""
    x = np.asarray(sample, dtype=float)
    if len(x) < 4:
        raise SampleTooSmall(f"kurtosis needs n >= 4, got {len(x)}")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise ZeroVariance("sample has zero variance")
    return float(np.mean(d**4)) / m2**2 - 3.0


@dataclass(frozen=True)
class RescaledSeries:
    dates: np.ndarray
    values: np.ndarray
    mode: str

    def __len__(self) -> int:
        return len(self.dates)


def _bucket_sigma(table: EstimateTable, kappa: np.ndarray) -> np.ndarray:
    b = table.bucket_of(kappa)
    ok = (b >= 0)
    sig = np.full(len(kappa), np.nan)
    sig[ok] = table.sigma[b[ok]]
    bad = ~(ok & (sig > 0))
    if np.any(bad):
        raise UnpopulatedBucket(float(kappa[np.argmax(bad)]))
    return sig


def rescale_returns(series: Observations, table: EstimateTable, mode: str = "concurrent") -> RescaledSeries:
    """Divide each return by the bucket sigma of its stress level.

    ``concurrent`` uses the same day's kappa.  ``persistence`` uses the previous
    row's kappa as the forecast and drops the first observation.
    """
    if mode == "concurrent":
        sig = _bucket_sigma(table, series.kappa)
        return RescaledSeries(series.dates, series.returns / sig, mode)
    if mode == "persistence":
        sig = _bucket_sigma(table, series.kappa[:-1])
        return RescaledSeries(series.dates[1:], series.returns[1:] / sig, mode)
    raise ValueError(f"unknown rescale mode {mode!r}")
