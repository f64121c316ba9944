"""Forecasting models sharing a ``fit`` / ``predict`` interface.

All of them produce sample paths through
:func:`~nptsforecast.forecaster.forecast_paths`; they only differ in the
per-step sampling distribution they hand it.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import deepnpts
from .forecaster import DEFAULT_NUM_SAMPLES, QUANTILE_LEVELS, ForecastResult, forecast_paths
from .kernels import KernelKind, KernelSpec, exponential_weights, index_offsets, seasonal_weights
from .timeseries import Frequency, TimeSeries, time_feature_matrix


class Forecaster:
    name = "base"

    def fit(self, panel: Sequence[TimeSeries]) -> "Forecaster":
        return self

    def source(self, series: TimeSeries, horizon: int):
        raise NotImplementedError

    def context_length_for(self, series: TimeSeries) -> int:
        return len(series)

    def predict(
        self,
        series: TimeSeries,
        horizon: int,
        num_samples: int = DEFAULT_NUM_SAMPLES,
        seed: int = 0,
        levels: Sequence[float] = QUANTILE_LEVELS,
    ) -> ForecastResult:
        return forecast_paths(
            series,
            self.source(series, horizon),
            horizon,
            num_samples=num_samples,
            seed=seed,
            context_length=self.context_length_for(series),
            levels=levels,
        )


class NPTS(Forecaster):
    """Local non-parametric forecaster with a fixed sampling kernel.

    ``context_length=None`` uses the whole history.
    """

    def __init__(
        self,
        kind: KernelKind | str = KernelKind.UNIFORM,
        lam: Optional[float] = None,
        freq: Optional[Frequency] = None,
        context_length: Optional[int] = None,
        features: Optional[Sequence[str]] = None,
    ):
        kind = KernelKind(kind)
        self.kind = kind
        self.lam = lam
        self.freq = freq
        self.context_length = context_length
        self.features = None if features is None else tuple(features)
        if not kind.seasonal:
            # validates lambda up front
            KernelSpec(kind, lam)

    @property
    def name(self) -> str:
        return {
            KernelKind.UNIFORM: "npts-uniform",
            KernelKind.EXPONENTIAL: "npts-exp",
            KernelKind.SEASONAL_UNIFORM: "seasonal-npts-uniform",
            KernelKind.SEASONAL_EXPONENTIAL: "seasonal-npts-exp",
        }[self.kind]

    def __repr__(self) -> str:
        lam = "" if self.lam is None else f", lam={self.lam}"
        return f"NPTS({self.kind.value}{lam})"

    def context_length_for(self, series: TimeSeries) -> int:
        if self.context_length is None:
            return len(series)
        return min(self.context_length, len(series))

    def spec(self, freq: Frequency) -> KernelSpec:
        return KernelSpec(self.kind, self.lam, self.freq or freq, self.features)

    def source(self, series: TimeSeries, horizon: int):
        spec = self.spec(series.freq)
        T = self.context_length_for(series)
        if spec.kind is KernelKind.UNIFORM:
            probs = np.full(T, 1.0 / T)
            return lambda windows, target_index: probs
        if spec.kind is KernelKind.EXPONENTIAL:
            w = exponential_weights(index_offsets(T), spec.lam)
            probs = w / w.sum()
            return lambda windows, target_index: probs

        stamps = [series.start + series.freq.offset(i) for i in range(len(series) + horizon)]
        feats = time_feature_matrix(spec.freq, stamps, spec.feature_set)

        def source(windows, target_index):
            w = seasonal_weights(feats[:, target_index - T:target_index], feats[:, target_index], spec.kind, spec.lam)
            return w / w.sum()

        return source


class SeasonalNaive(Forecaster):
    """Repeats the value one season back (the last value when history is shorter)."""

    name = "seasonal-naive"

    def __init__(self, season_length: Optional[int] = None):
        self.season_length = season_length

    def __repr__(self) -> str:
        return f"SeasonalNaive({self.season_length})"

    def context_length_for(self, series: TimeSeries) -> int:
        return min(len(series), self._season(series))

    def _season(self, series: TimeSeries) -> int:
        return self.season_length or series.freq.season_length

    def source(self, series: TimeSeries, horizon: int):
        T = self.context_length_for(series)
        probs = np.zeros(T)
        # index T - m when a full season is available, else the last value
        probs[0 if T == self._season(series) else T - 1] = 1.0
        return lambda windows, target_index: probs


class DeepNPTS(Forecaster):
    name = "deepnpts"

    def __init__(self, config: deepnpts.TrainingConfig, prediction_length: int):
        self.config = config
        self.prediction_length = prediction_length
        self.network: Optional[deepnpts.DeepNPTSNetwork] = None
        self.log: Optional[deepnpts.TrainingLog] = None

    def __repr__(self) -> str:
        return f"DeepNPTS({self.config})"

    @classmethod
    def from_network(cls, network: deepnpts.DeepNPTSNetwork, prediction_length: int) -> "DeepNPTS":
        cfg = deepnpts.TrainingConfig(
            context_length=network.context_length,
            normalization=network.params.normalization,
            input_scaling=network.layout.input_scaling,
            loss_scaling=network.loss_scaling,
            static_feat=network.layout.static_feat,
            time_features=network.layout.time_features,
        )
        model = cls(cfg, prediction_length)
        model.network = network
        return model

    def fit(self, panel: Sequence[TimeSeries]) -> "DeepNPTS":
        self.network, self.log = deepnpts.train(panel, self.config, self.prediction_length)
        return self

    def context_length_for(self, series: TimeSeries) -> int:
        T = self.config.context_length
        if len(series) < T:
            raise ValueError(f"series {series.id!r} has {len(series)} observations, DeepNPTS needs {T}")
        return T

    def source(self, series: TimeSeries, horizon: int):
        if self.network is None:
            raise RuntimeError("DeepNPTS.predict called before fit")
        return self.network.source_for(series, horizon)


MODEL_NAMES = (
    "npts-uniform",
    "npts-exp",
    "seasonal-npts-uniform",
    "seasonal-npts-exp",
    "deepnpts",
    "seasonal-naive",
)


def make_model(name: str, *, prediction_length: int = 1, **params) -> Forecaster:
    """Build a model by its command-line name.

    Recognised ``params``: ``lam`` and ``context_length`` for the NPTS kinds;
    ``season_length`` for seasonal naive; any :class:`TrainingConfig` field
    for ``deepnpts`` (``context_length`` is required there).
    """
    if name == "npts-uniform":
        return NPTS(KernelKind.UNIFORM, context_length=params.get("context_length"))
    if name == "npts-exp":
        return NPTS(KernelKind.EXPONENTIAL, params.get("lam", 1.0), context_length=params.get("context_length"))
    if name == "seasonal-npts-uniform":
        return NPTS(KernelKind.SEASONAL_UNIFORM, context_length=params.get("context_length"))
    if name == "seasonal-npts-exp":
        return NPTS(
            KernelKind.SEASONAL_EXPONENTIAL, params.get("lam", 1.0), context_length=params.get("context_length")
        )
    if name == "seasonal-naive":
        return SeasonalNaive(params.get("season_length"))
    if name == "deepnpts":
        cfg = deepnpts.TrainingConfig(**params)
        return DeepNPTS(cfg, prediction_length)
    raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
