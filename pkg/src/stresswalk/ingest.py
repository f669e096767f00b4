"""CSV ingestion and alignment of prices, stress indices and volumes.

All series are held column-wise in numpy arrays; dates are ``datetime64[D]``.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    EmptyJoin,
    InsufficientData,
    MalformedRow,
    MissingFile,
    NonMonotonicDate,
    NonPositivePrice,
    WindowTooLarge,
)

DEFAULT_DETREND_WINDOW = 252


class DatedSeries(NamedTuple):
    """Plain (dates, values) pair used for returns, volumes and ratios."""

    dates: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class PriceSeries:
    dates: np.ndarray
    closes: np.ndarray

    def __post_init__(self):
        _check_increasing(self.dates)
        if np.any(~(self.closes > 0)):
            raise NonPositivePrice(int(np.argmin(self.closes > 0)) + 1, "close must be > 0")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class StressSeries:
    dates: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        _check_increasing(self.dates)
        if np.any(~(self.kappa >= 0)):
            raise MalformedRow(int(np.argmin(self.kappa >= 0)) + 1, "kappa must be >= 0")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class LabeledObservation:
    date: dt.date
    log_return: float
    kappa: float
    kappa_change: float | None = None
    volume: float | None = None
    detrended_volume: float | None = None
    kappa2: float | None = None


def _opt(col: np.ndarray | None, i: int) -> float | None:
    if col is None:
        return None
    v = float(col[i])
    return None if math.isnan(v) else v


@dataclass(frozen=True)
class Observations:
    """Column store of labeled observations in an arbitrary order.

    Missing optional values are NaN; an absent optional column is ``None``.
    """

    dates: np.ndarray
    returns: np.ndarray
    kappa: np.ndarray
    kappa_change: np.ndarray | None = None
    volume: np.ndarray | None = None
    detrended_volume: np.ndarray | None = None
    kappa2: np.ndarray | None = None
    asset_id: str = "asset"

    _COLUMNS = ("dates", "returns", "kappa", "kappa_change", "volume", "detrended_volume", "kappa2")

    def __post_init__(self):
        n = len(self.dates)
        for name in self._COLUMNS:
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise ValueError(f"column {name!r} has length {len(col)}, expected {n}")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError("returns must be finite")
        if np.any(~(self.kappa >= 0)):
            raise ValueError("every observation needs a kappa >= 0")

    def __len__(self) -> int:
        return len(self.dates)

    def __iter__(self) -> Iterator[LabeledObservation]:
        for i in range(len(self)):
            yield LabeledObservation(
                date=self.dates[i].astype(dt.date),
                log_return=float(self.returns[i]),
                kappa=float(self.kappa[i]),
                kappa_change=_opt(self.kappa_change, i),
                volume=_opt(self.volume, i),
                detrended_volume=_opt(self.detrended_volume, i),
                kappa2=_opt(self.kappa2, i),
            )

    def columns(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self._COLUMNS if getattr(self, name) is not None}

    def take(self, index) -> "Observations":
        """Subset/reorder rows; the result is a plain :class:`Observations`."""
        index = np.asarray(index)
        cols = {k: v[index] for k, v in self.columns().items()}
        return Observations(asset_id=self.asset_id, **cols)


@dataclass(frozen=True)
class LabeledSeries(Observations):
    """Observations in strictly increasing date order."""

    def __post_init__(self):
        super().__post_init__()
        _check_increasing(self.dates)

    def take(self, index) -> "LabeledSeries | Observations":
        sub = super().take(index)
        d = sub.dates
        if len(d) < 2 or np.all(d[1:] > d[:-1]):
            return LabeledSeries(asset_id=self.asset_id, **sub.columns())
        return sub

    def with_columns(self, **cols) -> "LabeledSeries":
        return replace(self, **cols)


@dataclass
class JoinReport:
    dropped_return_dates: list = field(default_factory=list)
    dropped_stress_dates: list = field(default_factory=list)

    @property
    def n_dropped(self) -> int:
        return len(self.dropped_return_dates)


def _check_increasing(dates: np.ndarray) -> None:
    if len(dates) > 1:
        bad = np.nonzero(dates[1:] <= dates[:-1])[0]
        if len(bad):
            raise NonMonotonicDate(int(bad[0]) + 1, f"date {dates[bad[0] + 1]} not after {dates[bad[0]]}")


def _parse_date(text: str, line: int) -> np.datetime64:
    try:
        return np.datetime64(dt.date.fromisoformat(text.strip()), "D")
    except ValueError:
        raise MalformedRow(line, f"unparseable date {text!r}") from None


def _parse_float(text: str, line: int, name: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise MalformedRow(line, f"bad {name} value {text!r}") from None
    if not math.isfinite(v):
        raise MalformedRow(line, f"non-finite {name}")
    return v


def read_dated_csv(path, required: Sequence[str], optional: Sequence[str] = ()) -> dict[str, np.ndarray]:
    """Read a headed CSV with a ``date`` column plus numeric columns.

    Returns a dict of column arrays; optional columns missing from the header
    are omitted.  Raises :class:`MalformedRow` with the 1-based file line.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRow(1, "empty file") from None
        want = ["date", *required]
        missing = [c for c in want if c not in header]
        if missing:
            raise MalformedRow(1, f"header lacks columns {missing}; got {header}")
        present = want + [c for c in optional if c in header]
        pos = {c: header.index(c) for c in present}
        rows: dict[str, list] = {c: [] for c in present}
        lines = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            lines.append(line)
            if len(row) != len(header):
                raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")
            rows["date"].append(_parse_date(row[pos["date"]], line))
            for c in present[1:]:
                cell = row[pos[c]].strip()
                if c in optional and cell == "":
                    rows[c].append(math.nan)
                else:
                    rows[c].append(_parse_float(cell, line, c))
    out = {"date": np.array(rows["date"], dtype="datetime64[D]")}
    for c in present[1:]:
        out[c] = np.array(rows[c], dtype=float)
    d = out["date"]
    bad = np.nonzero(d[1:] <= d[:-1])[0]
    if len(bad):
        raise NonMonotonicDate(lines[bad[0] + 1], f"date {d[bad[0] + 1]} not after {d[bad[0]]}")
    out["line"] = np.array(lines, dtype=int)
    return out


def parse_price_series(path, close_column: str = "close") -> PriceSeries:
    cols = read_dated_csv(path, [close_column])
    closes = cols[close_column]
    bad = np.nonzero(~(closes > 0))[0]
    if len(bad):
        raise NonPositivePrice(int(cols["line"][bad[0]]), f"close={closes[bad[0]]}")
    return PriceSeries(cols["date"], closes)


def parse_stress_series(path, kappa_column: str = "kappa") -> StressSeries:
    cols = read_dated_csv(path, [kappa_column])
    kappa = cols[kappa_column]
    bad = np.nonzero(kappa < 0)[0]
    if len(bad):
        raise MalformedRow(int(cols["line"][bad[0]]), f"negative kappa {kappa[bad[0]]}")
    return StressSeries(cols["date"], kappa)


def parse_volume_series(path) -> DatedSeries:
    cols = read_dated_csv(path, ["volume"])
    if np.any(cols["volume"] < 0):
        raise MalformedRow(int(cols["line"][np.argmax(cols["volume"] < 0)]), "negative volume")
    return DatedSeries(cols["date"], cols["volume"])


def parse_labeled_csv(path, asset_id: str | None = None) -> LabeledSeries:
    """Read the combined ``date,return,kappa[,kappa2][,volume]`` format."""
    cols = read_dated_csv(path, ["return", "kappa"], optional=("kappa2", "volume", "detrended_volume"))
    kappa = cols["kappa"]
    if np.any(kappa < 0):
        raise MalformedRow(int(cols["line"][np.argmax(kappa < 0)]), "negative kappa")
    return LabeledSeries(
        dates=cols["date"],
        returns=cols["return"],
        kappa=kappa,
        kappa_change=kappa_changes(kappa),
        volume=cols.get("volume"),
        detrended_volume=cols.get("detrended_volume"),
        kappa2=cols.get("kappa2"),
        asset_id=asset_id or os.path.splitext(os.path.basename(os.fspath(path)))[0],
    )


def compute_log_returns(prices: PriceSeries) -> DatedSeries:
    """Daily continuously compounded returns ``ln(close_t / close_{t-1})``."""
    if len(prices) < 2:
        raise InsufficientData(f"need at least 2 prices, got {len(prices)}")
    logp = np.log(prices.closes)
    return DatedSeries(prices.dates[1:], np.diff(logp))


def kappa_changes(kappa: np.ndarray) -> np.ndarray:
    """One-step fractional change of kappa; NaN for the first entry.

    A zero prior level yields NaN rather than an infinite change.
    """
    out = np.full(len(kappa), np.nan)
    if len(kappa) > 1:
        prev = kappa[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[1:] = np.where(prev > 0, (kappa[1:] - prev) / prev, np.nan)
    return out


def label_with_stress(
    returns: DatedSeries,
    stress: StressSeries,
    join: str = "inner",
    asset_id: str = "asset",
) -> tuple[LabeledSeries, JoinReport]:
    """Attach the same-day stress level to each return.

    ``join="inner"`` keeps dates present in both inputs and reports the rest;
    ``join="strict"`` additionally refuses to drop any return date.
    ``kappa_change`` is taken against the previous row of the joined series.
    """
    if join not in ("inner", "strict"):
        raise ValueError(f"unknown join policy {join!r}")
    if len(returns) == 0 or len(stress) == 0:
        raise EmptyJoin("empty input")
    common, ir, ik = np.intersect1d(returns.dates, stress.dates, assume_unique=True, return_indices=True)
    if len(common) == 0:
        raise EmptyJoin("returns and stress share no dates")
    report = JoinReport(
        dropped_return_dates=[d.astype(dt.date) for d in np.setdiff1d(returns.dates, common)],
        dropped_stress_dates=[d.astype(dt.date) for d in np.setdiff1d(stress.dates, common)],
    )
    if join == "strict" and report.n_dropped:
        raise EmptyJoin(f"{report.n_dropped} return dates lack a stress level")
    kappa = stress.kappa[ik]
    series = LabeledSeries(
        dates=common,
        returns=np.asarray(returns.values, dtype=float)[ir],
        kappa=kappa,
        kappa_change=kappa_changes(kappa),
        asset_id=asset_id,
    )
    return series, report


def detrend_volume(volumes: DatedSeries, window: int = DEFAULT_DETREND_WINDOW) -> DatedSeries:
    """Ratio of each day's volume to the median of the preceding ``window`` days.

    The first ``window`` days have no full look-back and are omitted.
    """
    if window < 2:
        raise WindowTooLarge(f"window must be >= 2, got {window}")
    v = np.asarray(volumes.values, dtype=float)
    if len(v) <= window:
        raise WindowTooLarge(f"series of length {len(v)} too short for window {window}")
    trailing = np.median(np.lib.stride_tricks.sliding_window_view(v[:-1], window), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = v[window:] / trailing
    return DatedSeries(volumes.dates[window:], ratio)


def attach_volume(series: LabeledSeries, volume: DatedSeries | None = None,
                  detrended: DatedSeries | None = None) -> LabeledSeries:
    """Match raw and/or detrended volume onto a labeled series by date (NaN if absent)."""
    cols = {}
    for name, src in (("volume", volume), ("detrended_volume", detrended)):
        if src is None:
            continue
        col = np.full(len(series), np.nan)
        _, i_s, i_v = np.intersect1d(series.dates, src.dates, assume_unique=True, return_indices=True)
        col[i_s] = np.asarray(src.values, dtype=float)[i_v]
        cols[name] = col
    return series.with_columns(**cols)


def labeled_csv_text(series: Observations) -> str:
    """The combined labeled format as text, with whichever optional columns exist."""
    extra = [c for c in ("kappa2", "volume", "detrended_volume") if getattr(series, c) is not None]
    cols = [getattr(series, c) for c in extra]
    lines = [",".join(["date", "return", "kappa", *extra])]
    for i in range(len(series)):
        row = [str(series.dates[i]), repr(float(series.returns[i])), repr(float(series.kappa[i]))]
        for c in cols:
            v = float(c[i])
            row.append("" if math.isnan(v) else repr(v))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_labeled_csv(path, series: Observations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(labeled_csv_text(series))
