"""Stress-conditioned random-walk model of asset returns.

Returns are normal at a fixed market-stress level ``kappa`` (e.g. an
implied-volatility index); the fat tails of pooled returns come from mixing
those normals over the observed stress distribution.
"""
__version__ = "0.1.0"

from .errors import StressWalkError
from .estimators import (
    EstimateTable,
    Grid2D,
    SampleSet,
    bucket_table,
    grid_estimates,
    order_series,
    partition_fixed,
    split_sample,
)
from .ingest import LabeledSeries, Observations
from .normality import excess_kurtosis, rescale_returns, shapiro_wilk
from .riskmodel import (
    conditional_cdf,
    interval_probability,
    loss_probability_pn,
    mixture_cdf,
    mixture_moments,
    normal_cdf,
    normal_fit_cdf,
)
from .simulate import SimConfig, simulate, simulate_joint

__all__ = [
    "EstimateTable", "Grid2D", "LabeledSeries", "Observations", "SampleSet", "SimConfig", "StressWalkError",
    "bucket_table", "conditional_cdf", "excess_kurtosis", "grid_estimates", "interval_probability",
    "loss_probability_pn", "mixture_cdf", "mixture_moments", "normal_cdf", "normal_fit_cdf", "order_series",
    "partition_fixed", "rescale_returns", "shapiro_wilk", "simulate", "simulate_joint", "split_sample",
]
