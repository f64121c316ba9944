"""Non-parametric probabilistic forecasting.

Local forecasters (:class:`~nptsforecast.models.NPTS`) predict by sampling a
past time index from a kernel over the context window and reusing the value
observed there. :class:`~nptsforecast.models.DeepNPTS` learns that sampling
distribution with a small network shared across a panel of series.
"""

from .evaluation import BacktestPlan, BacktestReport, rolling_backtest, tune
from .forecaster import ForecastResult, PredictiveDistribution, empirical_quantile, forecast_paths, one_step_distribution
from .kernels import KernelKind, KernelSpec, SamplingDistribution, kernel_weights, sample_index
from .metrics import coverage, mean_quantile_loss, quantile_loss
from .models import NPTS, DeepNPTS, SeasonalNaive, make_model
from .timeseries import Frequency, TimeSeries, feature_distance, time_features, timestamp_at

__version__ = "0.1.0"

__all__ = [
    "BacktestPlan",
    "BacktestReport",
    "DeepNPTS",
    "ForecastResult",
    "Frequency",
    "KernelKind",
    "KernelSpec",
    "NPTS",
    "PredictiveDistribution",
    "SamplingDistribution",
    "SeasonalNaive",
    "TimeSeries",
    "coverage",
    "empirical_quantile",
    "feature_distance",
    "forecast_paths",
    "kernel_weights",
    "make_model",
    "mean_quantile_loss",
    "one_step_distribution",
    "quantile_loss",
    "rolling_backtest",
    "sample_index",
    "time_features",
    "timestamp_at",
    "tune",
]
