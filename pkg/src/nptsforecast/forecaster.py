"""Exact one-step predictive distributions and Monte Carlo sample paths."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import SamplingDistribution
from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

DEFAULT_NUM_SAMPLES = 100
QUANTILE_LEVELS = tuple(round(0.05 * k, 2) for k in range(1, 20))

#: ``source(windows, target_index)`` -> probabilities. ``windows`` is the
#: ``(K, T)`` matrix of context values per path, ``target_index`` the series
#: index being predicted. Return a ``(T,)`` vector shared by every path or a
#: ``(K, T)`` matrix with one distribution per path.
DistributionSource = Callable[[np.ndarray, int], np.ndarray]


class ForecastError(RuntimeError):
    pass


@dataclass(frozen=True)
class PredictiveDistribution:
    support: np.ndarray
    pmf: np.ndarray
    cdf: np.ndarray

    def quantile(self, level: float) -> float:
        """Smallest support value whose cumulative probability reaches ``level``."""
        idx = int(np.searchsorted(self.cdf, level - 1e-12, side="left"))
        return float(self.support[min(idx, self.support.size - 1)])


def one_step_distribution(context_values, dist) -> PredictiveDistribution:
    """Aggregate index probabilities into a pmf over the distinct context values."""
    values = np.asarray(context_values, dtype=float)
    probs = dist.probabilities if isinstance(dist, SamplingDistribution) else np.asarray(dist, dtype=float)
    if values.shape != probs.shape:
        raise ValueError(f"length mismatch: {values.size} context values, {probs.size} probabilities")
    support, inverse = np.unique(values, return_inverse=True)
    pmf = np.bincount(inverse.ravel(), weights=probs, minlength=support.size)
    cdf = np.cumsum(pmf)
    return PredictiveDistribution(support, pmf, cdf)


def empirical_quantile(samples, level: float) -> float:
    """Quantile of sorted samples, interpolating linearly at rank ``level * (K - 1)``."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {level}")
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no samples")
    rank = level * (samples.size - 1)
    lo = int(np.floor(rank))
    hi = min(lo + 1, samples.size - 1)
    frac = rank - lo
    return float(samples[lo] + frac * (samples[hi] - samples[lo]))


def quantile_curves(samples: np.ndarray, levels: Sequence[float] = QUANTILE_LEVELS) -> dict[float, np.ndarray]:
    """Per-step empirical quantiles of a ``(K, H)`` sample matrix."""
    levels = [float(a) for a in levels]
    for a in levels:
        if not 0.0 < a < 1.0:
            raise ValueError(f"quantile level must lie in (0, 1), got {a}")
    qs = np.quantile(samples, levels, axis=0, method="linear")
    return {a: qs[i] for i, a in enumerate(levels)}


@dataclass
class ForecastResult:
    series_id: str
    start_index: int
    samples: np.ndarray
    quantiles: dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]

    def quantile_matrix(self, levels: Sequence[float]) -> np.ndarray:
        """``(len(levels), H)`` array of the requested quantile curves."""
        missing = [a for a in levels if a not in self.quantiles]
        if missing:
            self.quantiles.update(quantile_curves(self.samples, missing))
        return np.stack([self.quantiles[a] for a in levels])


def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    if probs.ndim == 1:
        cdf = np.cumsum(probs)
        cdf /= cdf[-1]
        return np.searchsorted(cdf, u, side="right")
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    return (cdf <= u[:, None]).sum(axis=1)


def forecast_paths(
    series: TimeSeries,
    source: DistributionSource,
    horizon: int,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    context_length: Optional[int] = None,
    levels: Sequence[float] = QUANTILE_LEVELS,
) -> ForecastResult:
    """Autoregressive sample paths that only ever reuse observed values.

    Each step draws a context index per path from ``source`` and appends the
    value found there; the window of the last ``context_length`` values then
    slides forward over the path's own predictions. Uniform draws come from a
    single ``(K, H)`` matrix seeded by ``seed``, row ``k`` feeding path ``k``.
    """
    if horizon < 1 or num_samples < 1:
        raise ValueError(f"horizon and num_samples must be >= 1, got {horizon}, {num_samples}")
    n_obs = len(series)
    ctx = n_obs if context_length is None else min(int(context_length), n_obs)
    if ctx < 1:
        raise ValueError("context length must be >= 1")
    rng = np.random.default_rng(seed)
    uniforms = rng.random((num_samples, horizon))

    paths = np.empty((num_samples, ctx + horizon))
    paths[:, :ctx] = series.values[n_obs - ctx:]
    rows = np.arange(num_samples)
    for h in range(horizon):
        windows = paths[:, h:h + ctx]
        target_index = n_obs + h
        try:
            probs = np.asarray(source(windows, target_index), dtype=float)
        except Exception as exc:
            raise ForecastError(
                f"series {series.id!r}: distribution source failed at step {h + 1}/{horizon} "
                f"(all {num_samples} paths)"
            ) from exc
        if probs.shape[-1] != ctx:
            raise ForecastError(
                f"series {series.id!r}: step {h + 1} distribution has {probs.shape[-1]} states, "
                f"expected {ctx}"
            )
        idx = _draw(probs, uniforms[:, h])
        paths[:, ctx + h] = windows[rows, idx]

    samples = paths[:, ctx:]
    return ForecastResult(series.id, n_obs, samples, quantile_curves(samples, levels))
