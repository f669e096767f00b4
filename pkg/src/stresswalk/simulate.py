"""Synthetic markets with known stress-dependent parameters.

Stress follows an AR(1) process in log space,

    ln k_t = (1 - phi) ln k_bar + phi ln k_{t-1} + eps_t,   eps_t ~ N(0, scale^2)

and each day's return is an independent normal draw with mean ``mu_fn(k_t)``
and standard deviation ``sigma_fn(k_t)`` (dt = 1 day).

Random numbers come from numpy's PCG64 bit generator; normal deviates use
numpy's ziggurat sampler (``Generator.standard_normal``).  One
``SeedSequence`` per config is split into independent child streams (stress
innovations, bond stress innovations, stock noise, bond noise), so each
component is reproducible on its own and a two-asset run shares its stock
draws with the one-asset run of the same seed.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal

from .errors import InvalidConfig, MissingFile, NonPositiveDefiniteCell
from .estimators import EstimateTable
from .ingest import LabeledSeries, kappa_changes

EPOCH = np.datetime64("2000-01-01", "D")
_STREAMS = 4
_KAPPA_S, _KAPPA_B, _NOISE_S, _NOISE_B = range(_STREAMS)


# --------------------------------------------------------------------------
# parameter functions (JSON-describable)


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, kappa):
        return np.full(np.shape(kappa), float(self.value))


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant map; ``values[i]`` applies on ``[edges[i], edges[i+1])``.

    Stress below ``edges[0]`` takes ``values[0]``.
    """

    edges: tuple
    values: tuple

    def __post_init__(self):
        if len(self.edges) != len(self.values) or not self.edges:
            raise InvalidConfig("step function needs one value per edge")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise InvalidConfig("step edges must be strictly ascending")

    def __call__(self, kappa):
        idx = np.searchsorted(np.asarray(self.edges, float), kappa, side="right") - 1
        return np.asarray(self.values, float)[np.clip(idx, 0, None)]


@dataclass(frozen=True)
class Linear:
    intercept: float
    slope: float

    def __call__(self, kappa):
        return self.intercept + self.slope * np.asarray(kappa, dtype=float)


@dataclass(frozen=True)
class RhoThreshold:
    """Correlation ``above`` when the chosen stress axis is at/above ``threshold``, else ``below``."""

    threshold: float
    above: float
    below: float
    axis: str = "s"

    def __call__(self, kappa_s, kappa_b):
        k = kappa_s if self.axis == "s" else kappa_b
        return np.where(np.asarray(k) >= self.threshold, self.above, self.below).astype(float)


@dataclass(frozen=True)
class RhoConstant:
    value: float

    def __call__(self, kappa_s, kappa_b):
        return np.full(np.shape(kappa_s), float(self.value))


def function_from_dict(spec) -> Callable:
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    kind = spec.get("kind")
    if kind == "constant":
        return Constant(float(spec["value"]))
    if kind == "step":
        return StepFunction(tuple(map(float, spec["edges"])), tuple(map(float, spec["values"])))
    if kind == "linear":
        return Linear(float(spec["intercept"]), float(spec["slope"]))
    raise InvalidConfig(f"unknown function kind {kind!r}")


def rho_from_dict(spec) -> Callable:
    if isinstance(spec, (int, float)):
        return RhoConstant(float(spec))
    kind = spec.get("kind")
    if kind == "constant":
        return RhoConstant(float(spec["value"]))
    if kind == "threshold":
        return RhoThreshold(float(spec["threshold"]), float(spec["above"]), float(spec["below"]),
                            spec.get("axis", "s"))
    raise InvalidConfig(f"unknown rho kind {kind!r}")


def _fn_to_dict(fn) -> dict:
    if isinstance(fn, Constant):
        return {"kind": "constant", "value": fn.value}
    if isinstance(fn, StepFunction):
        return {"kind": "step", "edges": list(fn.edges), "values": list(fn.values)}
    if isinstance(fn, Linear):
        return {"kind": "linear", "intercept": fn.intercept, "slope": fn.slope}
    if isinstance(fn, RhoConstant):
        return {"kind": "constant", "value": fn.value}
    if isinstance(fn, RhoThreshold):
        return {"kind": "threshold", "threshold": fn.threshold, "above": fn.above,
                "below": fn.below, "axis": fn.axis}
    return {"kind": "python", "repr": repr(fn)}


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class KappaModel:
    level: float = 20.0
    phi: float = 0.98
    scale: float = 0.06

    def validate(self) -> None:
        if not self.level > 0:
            raise InvalidConfig("kappa level must be > 0")
        if not 0.0 <= self.phi < 1.0:
            raise InvalidConfig(f"phi must lie in [0, 1), got {self.phi}")
        if self.scale < 0:
            raise InvalidConfig("innovation scale must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    """Generator parameters.  The ``*_b`` fields are only used by :func:`simulate_joint`."""

    n: int
    seed: int
    kappa: KappaModel = field(default_factory=KappaModel)
    sigma_fn: Callable = field(default_factory=lambda: Constant(0.01))
    mu_fn: Callable = field(default_factory=lambda: Constant(0.0))
    mu_dkappa_slope: float = 0.0
    kappa_b: KappaModel | None = None
    sigma_b_fn: Callable | None = None
    mu_b_fn: Callable | None = None
    rho_fn: Callable | None = None
    kappa_corr: float = 0.0
    dt: float = 1.0

    def validate(self, joint: bool = False) -> None:
        if self.n < 1:
            raise InvalidConfig("n must be >= 1")
        if self.dt != 1.0:
            raise InvalidConfig("dt is fixed at one day")
        self.kappa.validate()
        if not -1.0 <= self.kappa_corr <= 1.0:
            raise InvalidConfig("kappa_corr must lie in [-1, 1]")
        if joint:
            if self.kappa_b is None or self.sigma_b_fn is None:
                raise InvalidConfig("two-asset simulation needs kappa_b and sigma_b_fn")
            self.kappa_b.validate()

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        try:
            kw = dict(
                n=int(d["n"]),
                seed=int(d["seed"]),
                kappa=KappaModel(**d.get("kappa", {})),
                sigma_fn=function_from_dict(d.get("sigma", 0.01)),
                mu_fn=function_from_dict(d.get("mu", 0.0)),
                mu_dkappa_slope=float(d.get("mu_dkappa_slope", 0.0)),
                kappa_corr=float(d.get("kappa_corr", 0.0)),
            )
            if "kappa_b" in d:
                kw.update(
                    kappa_b=KappaModel(**d["kappa_b"]),
                    sigma_b_fn=function_from_dict(d.get("sigma_b", 0.005)),
                    mu_b_fn=function_from_dict(d.get("mu_b", 0.0)),
                    rho_fn=rho_from_dict(d.get("rho", 0.0)),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad simulation config: {exc}") from None
        return cls(**kw)

    def to_dict(self) -> dict:
        d = {
            "n": self.n, "seed": self.seed,
            "kappa": vars(self.kappa).copy(),
            "sigma": _fn_to_dict(self.sigma_fn), "mu": _fn_to_dict(self.mu_fn),
            "mu_dkappa_slope": self.mu_dkappa_slope, "kappa_corr": self.kappa_corr,
        }
        if self.kappa_b is not None:
            d.update(kappa_b=vars(self.kappa_b).copy(), sigma_b=_fn_to_dict(self.sigma_b_fn),
                     mu_b=_fn_to_dict(self.mu_b_fn or Constant(0.0)),
                     rho=_fn_to_dict(self.rho_fn or RhoConstant(0.0)))
        return d

    @property
    def is_joint(self) -> bool:
        return self.kappa_b is not None


def load_sim_config(path) -> SimConfig:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, encoding="utf-8") as fh:
        return SimConfig.from_dict(json.load(fh))


def _streams(seed: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(_STREAMS)]


# --------------------------------------------------------------------------
# generators


def _ar1_log_path(model: KappaModel, eps: np.ndarray) -> np.ndarray:
    """Run the log-AR(1) recursion over unit innovations ``eps`` (first entry seeds t=0)."""
    mean = math.log(model.level)
    u = (1.0 - model.phi) * mean + model.scale * eps
    # stationary start
    u[0] = mean + model.scale / math.sqrt(1.0 - model.phi**2) * eps[0]
    # x_t = u_t + phi * x_{t-1}
    return np.exp(signal.lfilter([1.0], [1.0, -model.phi], u))


def simulate_stress_path(config: SimConfig) -> np.ndarray:
    """Positive, persistent stress path of length ``config.n``."""
    config.validate()
    eps = _streams(config.seed)[_KAPPA_S].standard_normal(config.n)
    return _ar1_log_path(config.kappa, eps)


def _stress_paths_joint(config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    g = _streams(config.seed)
    e_s = g[_KAPPA_S].standard_normal(config.n)
    e_b = g[_KAPPA_B].standard_normal(config.n)
    c = config.kappa_corr
    e_b = c * e_s + math.sqrt(1.0 - c * c) * e_b
    return _ar1_log_path(config.kappa, e_s), _ar1_log_path(config.kappa_b, e_b)


def _dates(n: int) -> np.ndarray:
    return EPOCH + np.arange(n)


def _mean_path(mu_fn, kappa: np.ndarray, slope: float) -> np.ndarray:
    mu = np.asarray(mu_fn(kappa), dtype=float)
    if slope:
        dk = np.nan_to_num(kappa_changes(kappa))
        mu = mu + slope * dk
    return mu


def _sigma_path(sigma_fn, kappa: np.ndarray) -> np.ndarray:
    sig = np.asarray(sigma_fn(kappa), dtype=float)
    if np.any(~(sig > 0)):
        raise InvalidConfig("sigma_fn must be > 0 for every reached stress level")
    return sig


def simulate_returns(config: SimConfig, kappa_path: np.ndarray, asset_id: str = "synthetic") -> LabeledSeries:
    """Draw ``r_t ~ N(mu(k_t), sigma(k_t)^2)`` independently given the path."""
    config.validate()
    kappa = np.asarray(kappa_path, dtype=float)
    if len(kappa) == 0:
        raise InvalidConfig("empty stress path")
    mu = _mean_path(config.mu_fn, kappa, config.mu_dkappa_slope)
    sig = _sigma_path(config.sigma_fn, kappa)
    z = _streams(config.seed)[_NOISE_S].standard_normal(len(kappa))
    r = mu * config.dt + sig * math.sqrt(config.dt) * z
    return LabeledSeries(dates=_dates(len(kappa)), returns=r, kappa=kappa,
                         kappa_change=kappa_changes(kappa), asset_id=asset_id)


def simulate(config: SimConfig) -> LabeledSeries:
    """One-asset synthetic market: stress path plus conditional returns."""
    return simulate_returns(config, simulate_stress_path(config))


def simulate_joint(config: SimConfig) -> tuple[LabeledSeries, LabeledSeries]:
    """Two-asset synthetic market.

    Each day draws a bivariate normal with correlation ``rho_fn(k_s, k_b)``.
    The stock series carries ``kappa = k_s, kappa2 = k_b``; the bond series
    carries ``kappa = k_b, kappa2 = k_s``.
    """
    config.validate(joint=True)
    ks, kb = _stress_paths_joint(config)
    rho_fn = config.rho_fn or RhoConstant(0.0)
    rho = np.asarray(rho_fn(ks, kb), dtype=float)
    if np.any(~(np.abs(rho) <= 1.0)):
        raise NonPositiveDefiniteCell("rho_fn produced |rho| > 1")
    g = _streams(config.seed)
    z1 = g[_NOISE_S].standard_normal(config.n)
    z2 = g[_NOISE_B].standard_normal(config.n)
    mu_s = _mean_path(config.mu_fn, ks, config.mu_dkappa_slope)
    mu_b = _mean_path(config.mu_b_fn or Constant(0.0), kb, 0.0)
    sig_s = _sigma_path(config.sigma_fn, ks)
    sig_b = _sigma_path(config.sigma_b_fn, kb)
    r_s = mu_s + sig_s * z1
    r_b = mu_b + sig_b * (rho * z1 + np.sqrt(1.0 - rho * rho) * z2)
    dates = _dates(config.n)
    a = LabeledSeries(dates=dates, returns=r_s, kappa=ks, kappa_change=kappa_changes(ks), kappa2=kb, asset_id="stock")
    b = LabeledSeries(dates=dates, returns=r_b, kappa=kb, kappa_change=kappa_changes(kb), kappa2=ks, asset_id="bond")
    return a, b


def generator_table(config: SimConfig, kappa_path: np.ndarray, edges: Sequence[float]) -> EstimateTable:
    """Occupancy-weighted table of the generator's true per-bucket mu and sigma.

    Exact only when ``mu_fn`` and ``sigma_fn`` are constant inside every
    bucket (e.g. step functions sharing ``edges``); otherwise ``ValueError``.
    """
    edges = np.asarray(edges, dtype=float)
    kappa = np.asarray(kappa_path, dtype=float)
    b = np.searchsorted(edges, kappa, side="right") - 1
    if np.any(b < 0):
        raise ValueError("stress path reaches below the first edge")
    if config.mu_dkappa_slope:
        raise ValueError("mean depends on kappa change; no per-bucket normal exists")
    k = len(edges)
    mu = np.full(k, np.nan)
    sigma = np.full(k, np.nan)
    count = np.bincount(b, minlength=k)
    mu_all = np.asarray(config.mu_fn(kappa), dtype=float)
    sig_all = np.asarray(config.sigma_fn(kappa), dtype=float)
    for i in range(k):
        m = b == i
        if not m.any():
            continue
        if np.ptp(mu_all[m]) > 0 or np.ptp(sig_all[m]) > 0:
            raise ValueError(f"generator parameters vary inside bucket {i}")
        mu[i], sigma[i] = mu_all[m][0], sig_all[m][0]
    return EstimateTable(edges, count / count.sum(), mu, sigma, count)
