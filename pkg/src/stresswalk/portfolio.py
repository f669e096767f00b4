"""Two-asset (stock/bond) portfolios per stress cell and per-bucket CAPM fits.

Weights are long-only: ``w`` is the bond share, ``1 - w`` the stock share.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateAssets,
    EmptyGrid,
    EmptyJoin,
    InsufficientBucketData,
    WeightOutOfRange,
    ZeroBenchmarkVariance,
)
from .estimators import Grid2D
from .ingest import Observations
from .riskmodel import mixture_cdf_params


@dataclass(frozen=True)
class CellParams:
    mu_s: float
    mu_b: float
    sigma_s: float
    sigma_b: float
    rho: float

    def __post_init__(self):
        if self.sigma_s < 0 or self.sigma_b < 0:
            raise ValueError("sigmas must be >= 0")
        if not abs(self.rho) <= 1.0:
            raise ValueError(f"|rho| must be <= 1, got {self.rho}")

    @classmethod
    def from_grid(cls, grid: Grid2D, i: int, j: int) -> "CellParams":
        if not grid.occupied[i, j]:
            raise EmptyGrid(f"grid cell ({i}, {j}) holds no observations")
        if grid.count[i, j] < 2:
            raise EmptyGrid(f"grid cell ({i}, {j}) has a single observation; sigma undefined")
        rho = grid.rho[i, j]
        return cls(float(grid.mu_s[i, j]), float(grid.mu_b[i, j]), float(grid.sigma_s[i, j]),
                   float(grid.sigma_b[i, j]), 0.0 if math.isnan(rho) else float(rho))


def _check_weight(w) -> None:
    if np.any(~((np.asarray(w) >= 0.0) & (np.asarray(w) <= 1.0))):
        raise WeightOutOfRange(f"bond weight must lie in [0, 1], got {w}")


def portfolio_moments(cell: CellParams, w):
    """Mean and variance of ``w * bond + (1 - w) * stock`` for one cell."""
    _check_weight(w)
    v = 1.0 - w
    mu_p = w * cell.mu_b + v * cell.mu_s
    var_p = (w * cell.sigma_b) ** 2 + (v * cell.sigma_s) ** 2 + 2.0 * w * v * cell.rho * cell.sigma_s * cell.sigma_b
    return mu_p, np.maximum(var_p, 0.0) if np.ndim(var_p) else max(var_p, 0.0)


@dataclass(frozen=True)
class FrontierPoint:
    w: float
    mu_p: float
    var_p: float
    efficient: bool


@dataclass(frozen=True)
class Frontier:
    points: list[FrontierPoint]
    w_min_variance: float
    """Unconstrained minimum-variance bond weight (may fall outside [0, 1])."""

    @property
    def efficient_weights(self) -> list[float]:
        return [p.w for p in self.points if p.efficient]


def min_variance_weight(cell: CellParams) -> float:
    ss, sb, r = cell.sigma_s, cell.sigma_b, cell.rho
    den = ss * ss + sb * sb - 2.0 * r * ss * sb
    if den <= 0.0:
        raise DegenerateAssets("both assets have the same risk and rho = 1; no unique minimum")
    return (ss * ss - r * ss * sb) / den


def efficient_frontier(cell: CellParams, w_step: float = 0.1) -> Frontier:
    """Sample the long-only frontier parabola at ``w = 0, w_step, ..., 1``.

    A point is flagged efficient when its mean is at least the mean of the
    minimum-variance long-only portfolio.
    """
    if not 0.0 < w_step <= 0.5:
        raise ValueError("w_step must lie in (0, 0.5]")
    w_star = min_variance_weight(cell)
    n = int(round(1.0 / w_step))
    ws = np.linspace(0.0, 1.0, n + 1) if abs(n * w_step - 1.0) < 1e-9 else np.append(np.arange(0.0, 1.0, w_step), 1.0)
    mu_star, _ = portfolio_moments(cell, min(max(w_star, 0.0), 1.0))
    pts = []
    for w in ws:
        mu_p, var_p = portfolio_moments(cell, float(w))
        pts.append(FrontierPoint(float(w), float(mu_p), float(var_p), bool(mu_p >= mu_star - 1e-15)))
    return Frontier(pts, w_star)


def portfolio_mixture_cdf(grid: Grid2D, w: float, x0: float) -> float:
    """Probability of a portfolio return below ``x0``, mixing over occupied grid cells."""
    _check_weight(w)
    occ = grid.occupied
    if not np.any(occ):
        raise EmptyGrid("grid has no occupied cell")
    v = 1.0 - w
    ss = np.nan_to_num(grid.sigma_s[occ])
    sb = np.nan_to_num(grid.sigma_b[occ])
    rho = np.nan_to_num(grid.rho[occ])
    mu_p = w * grid.mu_b[occ] + v * grid.mu_s[occ]
    var_p = np.maximum((w * sb) ** 2 + (v * ss) ** 2 + 2.0 * w * v * rho * ss * sb, 0.0)
    return mixture_cdf_params(grid.joint_probability[occ], mu_p, np.sqrt(var_p), x0)


@dataclass(frozen=True)
class RegressionResult:
    bucket_low: float
    bucket_high: float
    alpha: float
    beta: float
    r_squared: float
    n: int


def ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Intercept, slope and R^2 of ``y`` on ``x``."""
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ZeroBenchmarkVariance("benchmark returns are constant")
    beta = float(dx @ dy) / sxx
    alpha = float(my - beta * mx)
    resid = dy - beta * dx
    syy = float(dy @ dy)
    r2 = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    return alpha, beta, min(max(r2, 0.0), 1.0)


def capm_regression(asset: Observations, benchmark: Observations,
                    edges: Sequence[float]) -> list[RegressionResult]:
    """OLS of asset on benchmark returns within each stress bucket.

    Dates are inner-joined; buckets use the benchmark's kappa.  Raw returns
    are used (no risk-free adjustment).
    """
    common, ia, ib = np.intersect1d(asset.dates, benchmark.dates, assume_unique=True, return_indices=True)
    if len(common) == 0:
        raise EmptyJoin("asset and benchmark share no dates")
    y = asset.returns[ia]
    x = benchmark.returns[ib]
    kappa = benchmark.kappa[ib]
    edges = np.asarray(edges, dtype=float)
    uppers = np.append(edges[1:], np.inf)
    b = np.searchsorted(edges, kappa, side="right") - 1
    out = []
    for i, (lo, hi) in enumerate(zip(edges, uppers)):
        m = b == i
        n = int(m.sum())
        if n < 3:
            raise InsufficientBucketData(f"bucket [{lo:g}, {hi:g}) has {n} joint observations (< 3)")
        try:
            alpha, beta, r2 = ols(x[m], y[m])
        except ZeroBenchmarkVariance:
            raise ZeroBenchmarkVariance(f"benchmark constant in bucket [{lo:g}, {hi:g})") from None
        out.append(RegressionResult(float(lo), float(hi), alpha, beta, r2, n))
    return out
