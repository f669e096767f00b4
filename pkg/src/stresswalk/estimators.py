"""Stress ordering, fixed-size partitions and per-bucket moment estimates."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptyJoin,
    EmptySeries,
    MalformedRow,
    MissingFile,
    MissingKappaChange,
    MissingVolume,
    NoObservations,
    SetSizeTooSmall,
    TooFewObservations,
)
from .ingest import LabeledSeries, Observations

log = logging.getLogger(__name__)

ORDER_MODES = ("chronological", "randomized", "stress_ascending", "stress_change_ascending")
DEFAULT_SET_SIZE = 75
#: Fixed-width stress buckets of width 10 with an open top bucket.
DEFAULT_EDGES = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0)
PROBABILITY_TOL = 1e-12


def sample_moments(x: np.ndarray) -> tuple[float, float]:
    """Sample mean and n-1 standard deviation (NaN when fewer than 2 values)."""
    n = len(x)
    if n == 0:
        return math.nan, math.nan
    mean = float(np.mean(x))
    if n < 2:
        return mean, math.nan
    return mean, float(np.std(x, ddof=1))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < 2:
        return math.nan
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


# --------------------------------------------------------------------------
# ordering and partitions


def order_index(series: Observations, mode: str, seed: int | None = None) -> np.ndarray:
    """Permutation that puts ``series`` into the requested order.

    Ties in kappa (or kappa change) are broken by date.  Observations without
    a kappa change sort last under ``stress_change_ascending``.
    """
    n = len(series)
    if n == 0:
        raise EmptySeries("cannot order an empty series")
    if mode == "chronological":
        return np.argsort(series.dates, kind="stable")
    if mode == "randomized":
        if seed is None:
            raise ValueError("randomized ordering needs an explicit seed")
        return np.random.default_rng(seed).permutation(n)
    if mode == "stress_ascending":
        return np.lexsort((series.dates, series.kappa))
    if mode == "stress_change_ascending":
        if series.kappa_change is None:
            raise MissingKappaChange("series carries no kappa_change column")
        dk = series.kappa_change
        return np.lexsort((series.dates, np.where(np.isnan(dk), np.inf, dk), np.isnan(dk)))
    raise ValueError(f"unknown ordering mode {mode!r}; choose from {ORDER_MODES}")


def order_series(series: Observations, mode: str, seed: int | None = None) -> Observations:
    return series.take(order_index(series, mode, seed))


@dataclass(frozen=True)
class SampleSet:
    index: int
    observations: Observations
    kappa_min: float
    kappa_max: float
    mu_hat: float
    sigma_hat: float

    @property
    def count(self) -> int:
        return len(self.observations)

    @property
    def returns(self) -> np.ndarray:
        return self.observations.returns


def partition_fixed(ordered: Observations, set_size: int = DEFAULT_SET_SIZE) -> tuple[list[SampleSet], int]:
    """Cut an ordered series into consecutive non-overlapping sets.

    Returns ``(sets, n_dropped)``; the trailing remainder is dropped.
    """
    if set_size < 3:
        raise SetSizeTooSmall(f"set_size must be >= 3, got {set_size}")
    n_sets = len(ordered) // set_size
    sets = []
    for k in range(n_sets):
        block = ordered.take(np.arange(k * set_size, (k + 1) * set_size))
        mu, sd = sample_moments(block.returns)
        sets.append(SampleSet(k, block, float(block.kappa.min()), float(block.kappa.max()), mu, sd))
    return sets, len(ordered) - n_sets * set_size


def adjacent_sigma_dispersion(sets: Sequence[SampleSet]) -> float:
    """Set-to-set scatter of sigma_hat along an ordering.

    RMS of the second difference of ``log(sigma_hat)`` over consecutive sets.
    A smooth trend (sigma rising with stress) contributes almost nothing; only
    scatter between neighbours does.  Needs at least three sets with positive
    sigma_hat.
    """
    s = np.array([ss.sigma_hat for ss in sets], dtype=float)
    if len(s) < 3 or np.any(~(s > 0)):
        return math.nan
    return float(np.sqrt(np.mean(np.diff(np.log(s), 2) ** 2)))


def bucketed_sets(series: Observations, edges: Sequence[float],
                  set_size: int = DEFAULT_SET_SIZE) -> list[SampleSet]:
    """Fixed-size sets formed separately inside each kappa bucket.

    Within a bucket, observations keep their chronological order.  Each
    bucket's remainder is dropped; set indices run across all buckets.
    """
    edges = np.asarray(edges, dtype=float)
    b = np.searchsorted(edges, series.kappa, side="right") - 1
    chrono = order_index(series, "chronological")
    out: list[SampleSet] = []
    for i in range(len(edges)):
        idx = chrono[b[chrono] == i]
        sets, _ = partition_fixed(series.take(idx), set_size)
        for s in sets:
            out.append(SampleSet(len(out), s.observations, s.kappa_min, s.kappa_max, s.mu_hat, s.sigma_hat))
    return out


def split_sample(series: LabeledSeries, seed: int) -> tuple[LabeledSeries, LabeledSeries]:
    """Uniform random split into halves (train gets the extra row if n is odd)."""
    n = len(series)
    if n < 2:
        raise TooFewObservations(f"need at least 2 observations, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    half = (n + 1) // 2
    return series.take(np.sort(perm[:half])), series.take(np.sort(perm[half:]))


# --------------------------------------------------------------------------
# one-dimensional bucket table


@dataclass(frozen=True)
class EstimateTable:
    """Per-bucket frequency, mean and standard deviation.

    ``edges`` are the bucket lower bounds; bucket ``i`` covers
    ``[edges[i], edges[i+1])`` and the last bucket is open-ended.
    ``count`` is -1 when a table was entered by hand without counts.
    """

    edges: np.ndarray
    probability: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        k = len(self.edges)
        if k == 0:
            raise ValueError("table needs at least one bucket")
        for name in ("probability", "mu", "sigma", "count"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name} length differs from edges")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("bucket edges must be strictly ascending")
        p = self.probability
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and >= 0")
        if p.sum() > 0 and abs(p.sum() - 1.0) > PROBABILITY_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        pop = p > 0
        if np.any(self.sigma[pop] < 0):
            raise ValueError("sigma must be >= 0")

    @classmethod
    def from_rows(cls, edges, probability, mu, sigma, count=None) -> "EstimateTable":
        """Build a table from hand-entered rows, renormalising the probabilities.

        Hand-entered tables often round their percentages, so weights are rescaled to
        sum to one; the correction is logged when it exceeds rounding noise.
        """
        p = np.asarray(probability, dtype=float)
        total = p.sum()
        if total <= 0:
            raise ValueError("probabilities sum to zero")
        if abs(total - 1.0) > 1e-9:
            log.info("renormalising bucket probabilities (sum was %.6g)", total)
        k = len(p)
        cnt = np.full(k, -1, dtype=int) if count is None else np.asarray(count, dtype=int)
        return cls(
            edges=np.asarray(edges, dtype=float),
            probability=p / total,
            mu=np.asarray(mu, dtype=float),
            sigma=np.asarray(sigma, dtype=float),
            count=cnt,
        )

    @property
    def uppers(self) -> np.ndarray:
        return np.append(self.edges[1:], np.inf)

    @property
    def populated(self) -> np.ndarray:
        return self.probability > 0

    @property
    def flags(self) -> list[str]:
        out = []
        for p, c in zip(self.probability, self.count):
            if p == 0:
                out.append("empty")
            elif c == 1:
                out.append("degenerate")
            else:
                out.append("ok")
        return out

    def __len__(self) -> int:
        return len(self.edges)

    def bucket_of(self, kappa) -> np.ndarray:
        """Bucket index for each kappa (-1 below the first edge)."""
        return np.searchsorted(self.edges, np.asarray(kappa, dtype=float), side="right") - 1

    def select(self, kappa_min: float = -math.inf, kappa_max: float = math.inf) -> np.ndarray:
        """Mask of buckets lying entirely inside ``[kappa_min, kappa_max]``."""
        return (self.edges >= kappa_min) & (self.uppers <= kappa_max)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        rows = []
        for i in range(len(self)):
            rows.append({
                "bucket_low": float(self.edges[i]),
                "bucket_high": _num(self.uppers[i]),
                "p": float(self.probability[i]),
                "mu": _num(self.mu[i]),
                "sigma": _num(self.sigma[i]),
                "count": int(self.count[i]),
                "flag": self.flags[i],
            })
        return {"kind": "estimate_table", "buckets": rows}

    @classmethod
    def from_dict(cls, data: dict) -> "EstimateTable":
        rows = data["buckets"]
        return cls.from_rows(
            [r["bucket_low"] for r in rows],
            [r["p"] for r in rows],
            [_unnum(r["mu"]) for r in rows],
            [_unnum(r["sigma"]) for r in rows],
            [r.get("count", -1) for r in rows],
        )


def _num(v: float):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _unnum(v) -> float:
    if v is None or v == "":
        return math.nan
    return float(v)


TABLE_CSV_HEADER = ("bucket_low", "bucket_high", "p", "mu", "sigma", "count")


def write_table(path, table: EstimateTable, fmt: str | None = None) -> None:
    fmt = fmt or ("csv" if os.fspath(path).endswith(".csv") else "json")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(table_text(table, fmt))


def table_text(table: EstimateTable, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(table.to_dict(), indent=2) + "\n"
    lines = [",".join(TABLE_CSV_HEADER)]
    for r in table.to_dict()["buckets"]:
        lines.append(",".join("" if r[c] is None else repr(r[c]) if isinstance(r[c], float) else str(r[c])
                              for c in TABLE_CSV_HEADER))
    return "\n".join(lines) + "\n"


def read_table(path) -> EstimateTable:
    """Load an :class:`EstimateTable` from JSON or the flat CSV format."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    if path.endswith(".csv"):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in TABLE_CSV_HEADER if c not in (reader.fieldnames or [])]
            if missing:
                raise MalformedRow(1, f"table header lacks {missing}")
            rows = []
            for line, r in enumerate(reader, start=2):
                try:
                    rows.append({"bucket_low": float(r["bucket_low"]), "p": float(r["p"]),
                                 "mu": _unnum(r["mu"]), "sigma": _unnum(r["sigma"]),
                                 "count": int(r["count"] or -1)})
                except ValueError as exc:
                    raise MalformedRow(line, str(exc)) from None
        return EstimateTable.from_dict({"buckets": rows})
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("kind") != "estimate_table":
        raise MalformedRow(1, f"{path} is not an estimate table")
    return EstimateTable.from_dict(data)


def bucket_table(series: Observations, edges: Sequence[float] = DEFAULT_EDGES) -> EstimateTable:
    """Frequency, mean and standard deviation of returns per kappa bucket.

    Observations below the first edge are not counted.  Buckets with a single
    observation keep their mean but get ``sigma = NaN`` and are flagged
    ``degenerate``; empty buckets carry zero probability and NaN moments.
    """
    edges = np.asarray(edges, dtype=float)
    if len(series) == 0:
        raise NoObservations("no observations to bucket")
    if len(edges) == 0 or np.any(np.diff(edges) <= 0):
        raise ValueError("bucket edges must be non-empty and strictly ascending")
    b = np.searchsorted(edges, series.kappa, side="right") - 1
    inside = b >= 0
    total = int(inside.sum())
    if total == 0:
        raise NoObservations("no observation falls inside the bucket edges")
    if total < len(series):
        log.info("%d observations below the first edge %g ignored", len(series) - total, edges[0])
    k = len(edges)
    mu = np.full(k, np.nan)
    sigma = np.full(k, np.nan)
    count = np.zeros(k, dtype=int)
    for i in range(k):
        r = series.returns[b == i]
        count[i] = len(r)
        mu[i], sigma[i] = sample_moments(r)
        if len(r) == 1:
            log.warning("bucket [%g, ...) has a single observation; sigma undefined", edges[i])
    return EstimateTable(edges, count / total, mu, sigma, count)


# --------------------------------------------------------------------------
# two-dimensional grid


@dataclass(frozen=True)
class Grid2D:
    """Per-cell moments on a decile grid of two stress axes.

    ``edges_s``/``edges_b`` hold the smallest kappa in each decile (lower
    bounds, top decile open-ended).  Cell ``[i, j]`` is stock decile ``i`` and
    bond decile ``j``.  Unoccupied cells have zero probability and NaN moments.
    """

    edges_s: np.ndarray
    edges_b: np.ndarray
    mu_s: np.ndarray
    mu_b: np.ndarray
    sigma_s: np.ndarray
    sigma_b: np.ndarray
    rho: np.ndarray
    joint_probability: np.ndarray
    count: np.ndarray

    @property
    def occupied(self) -> np.ndarray:
        return self.count > 0

    @property
    def degenerate(self) -> np.ndarray:
        return self.count == 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.count.shape

    def to_dict(self) -> dict:
        cells = []
        ns, nb = self.shape
        for i in range(ns):
            for j in range(nb):
                cells.append({
                    "cell_s": i, "cell_b": j,
                    "p": float(self.joint_probability[i, j]),
                    "mu_s": _num(self.mu_s[i, j]), "mu_b": _num(self.mu_b[i, j]),
                    "sigma_s": _num(self.sigma_s[i, j]), "sigma_b": _num(self.sigma_b[i, j]),
                    "rho": _num(self.rho[i, j]), "count": int(self.count[i, j]),
                })
        return {"kind": "grid2d", "edges_s": [float(e) for e in self.edges_s],
                "edges_b": [float(e) for e in self.edges_b], "cells": cells}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid2D":
        ns, nb = len(data["edges_s"]), len(data["edges_b"])
        arrays = {k: np.full((ns, nb), np.nan) for k in ("mu_s", "mu_b", "sigma_s", "sigma_b", "rho")}
        p = np.zeros((ns, nb))
        count = np.zeros((ns, nb), dtype=int)
        for c in data["cells"]:
            i, j = c["cell_s"], c["cell_b"]
            p[i, j] = c["p"]
            count[i, j] = c["count"]
            for k in arrays:
                arrays[k][i, j] = _unnum(c[k])
        return cls(np.asarray(data["edges_s"], float), np.asarray(data["edges_b"], float),
                   joint_probability=p, count=count, **arrays)

    def to_csv_text(self) -> str:
        cols = ("cell_s", "cell_b", "kappa_s_low", "kappa_b_low", "p", "mu_s", "mu_b",
                "sigma_s", "sigma_b", "rho", "count")
        lines = [",".join(cols)]
        for c in self.to_dict()["cells"]:
            row = dict(c, kappa_s_low=float(self.edges_s[c["cell_s"]]), kappa_b_low=float(self.edges_b[c["cell_b"]]))
            lines.append(",".join("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else str(row[k])
                                  for k in cols))
        return "\n".join(lines) + "\n"


def read_grid(path) -> Grid2D:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("kind") != "grid2d":
        raise MalformedRow(1, f"{path} is not a grid")
    return Grid2D.from_dict(data)


def _rank_deciles(kappa: np.ndarray, dates: np.ndarray, n_bins: int) -> np.ndarray:
    order = np.lexsort((dates, kappa))
    rank = np.empty(len(kappa), dtype=int)
    rank[order] = np.arange(len(kappa))
    return rank * n_bins // len(kappa)


def grid_estimates(series_a: Observations, series_b: Observations, deciles: int = 10) -> Grid2D:
    """Per-cell moments and correlation on a ``deciles x deciles`` stress grid.

    The two series are inner-joined on date.  ``series_a.kappa`` is the first
    (stock) axis and ``series_b.kappa`` the second (bond) axis.  Observations
    are assigned to quantile bins by rank, so each marginal bin holds the same
    number of days to within one.
    """
    common, ia, ib = np.intersect1d(series_a.dates, series_b.dates, assume_unique=True, return_indices=True)
    if len(common) == 0:
        raise EmptyJoin("the two series share no dates")
    if deciles < 1 or len(common) < deciles:
        raise TooFewObservations(f"{len(common)} joint days cannot fill {deciles} quantile bins")
    ra, rb = series_a.returns[ia], series_b.returns[ib]
    ka, kb = series_a.kappa[ia], series_b.kappa[ib]
    da = _rank_deciles(ka, common, deciles)
    db = _rank_deciles(kb, common, deciles)
    edges_s = np.array([ka[da == d].min() for d in range(deciles)])
    edges_b = np.array([kb[db == d].min() for d in range(deciles)])
    shape = (deciles, deciles)
    out = {k: np.full(shape, np.nan) for k in ("mu_s", "mu_b", "sigma_s", "sigma_b", "rho")}
    count = np.zeros(shape, dtype=int)
    for i in range(deciles):
        in_i = da == i
        for j in range(deciles):
            m = in_i & (db == j)
            n = int(m.sum())
            count[i, j] = n
            if n == 0:
                continue
            out["mu_s"][i, j], out["sigma_s"][i, j] = sample_moments(ra[m])
            out["mu_b"][i, j], out["sigma_b"][i, j] = sample_moments(rb[m])
            out["rho"][i, j] = pearson(ra[m], rb[m])
    n_deg = int((count == 1).sum())
    if n_deg:
        log.warning("%d grid cells hold a single observation; sigma and rho undefined there", n_deg)
    return Grid2D(edges_s, edges_b, joint_probability=count / count.sum(), count=count, **out)


# --------------------------------------------------------------------------
# auxiliary curves


def median_volume_by_stress(series: Observations, set_size: int = DEFAULT_SET_SIZE) -> list[tuple[int, float]]:
    """Median detrended volume per stress-ordered set of ``set_size`` days."""
    v = series.detrended_volume
    if v is None or np.any(~np.isfinite(v)):
        raise MissingVolume("every observation needs a finite detrended volume")
    sets, _ = partition_fixed(order_series(series, "stress_ascending"), set_size)
    return [(s.index, float(np.median(s.observations.detrended_volume))) for s in sets]


def mu_by_stress_change(series: Observations, set_size: int = DEFAULT_SET_SIZE) -> list[tuple[float, float]]:
    """Mean return of sets ordered by the one-day fractional kappa change.

    Returns ``(median kappa change of the set, mean return)`` pairs.
    """
    dk = series.kappa_change
    if dk is None:
        raise MissingKappaChange("series carries no kappa_change column")
    have = np.nonzero(np.isfinite(dk))[0]
    if len(have) < set_size:
        raise MissingKappaChange(f"only {len(have)} observations have a kappa change (< {set_size})")
    sub = series.take(have)
    sets, _ = partition_fixed(order_series(sub, "stress_change_ascending"), set_size)
    return [(float(np.median(s.observations.kappa_change)), s.mu_hat) for s in sets]
