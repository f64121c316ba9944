"""Global sampling-distribution network trained with the ranked probability score.

A two-layer perceptron maps a context window (values plus per-step
covariates) to one probability per window index. The network is written
directly in numpy: forward pass, reverse-mode gradient and an Adam update.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .forecaster import one_step_distribution
from .kernels import SamplingDistribution
from .metrics import pinball
from .timeseries import Frequency, TimeSeries, feature_names, time_feature_matrix

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_TINY = 1e-9


class Normalization(str, enum.Enum):
    SOFTMAX = "softmax"
    SUM = "sum-normalize"


class InputScaling(str, enum.Enum):
    NONE = "none"
    STANDARDIZATION = "standardization"


class LossScaling(str, enum.Enum):
    NONE = "none"
    MIN_MAX = "min-max"


@dataclass
class MlpParameters:
    """Weights of the two affine layers; hidden width equals the context length."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    normalization: Normalization = Normalization.SOFTMAX

    NAMES = ("w1", "b1", "w2", "b2")

    def __post_init__(self):
        self.normalization = Normalization(self.normalization)

    @property
    def context_length(self) -> int:
        return self.w2.shape[0]

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.NAMES}

    def copy(self) -> "MlpParameters":
        return MlpParameters(*(a.copy() for a in self.arrays().values()), self.normalization)

    def check_finite(self, where: str = "") -> None:
        for name, arr in self.arrays().items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite values in parameter {name} {where}".rstrip())


def init_parameters(
    input_size: int,
    context_length: int,
    normalization: Normalization | str = Normalization.SOFTMAX,
    hidden: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> MlpParameters:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(0) if rng is None else rng
    hidden = context_length if hidden is None else hidden

    def glorot(fan_out, fan_in):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    return MlpParameters(
        w1=glorot(hidden, input_size),
        b1=np.zeros(hidden),
        w2=glorot(context_length, hidden),
        b2=np.zeros(context_length),
        normalization=Normalization(normalization),
    )


# ---------------------------------------------------------------- forward


@dataclass
class _Cache:
    x: np.ndarray
    a1: np.ndarray
    h: np.ndarray
    mask: Optional[np.ndarray]
    y: np.ndarray
    q: np.ndarray
    norm_sum: Optional[np.ndarray]  # row sums of rectified outputs (sum-normalize only)
    degenerate: Optional[np.ndarray]


def _forward(params: MlpParameters, x: np.ndarray, mask: Optional[np.ndarray] = None) -> _Cache:
    a1 = x @ params.w1.T + params.b1
    if not np.all(np.isfinite(a1)):
        raise FloatingPointError("non-finite activations in layer 1")
    h = np.maximum(a1, 0.0)
    if mask is not None:
        h = h * mask
    y = h @ params.w2.T + params.b2
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite activations in layer 2")
    if params.normalization is Normalization.SOFTMAX:
        z = y - y.max(axis=1, keepdims=True)
        e = np.exp(z)
        q = e / e.sum(axis=1, keepdims=True)
        return _Cache(x, a1, h, mask, y, q, None, None)
    o = np.maximum(y, 0.0)
    s = o.sum(axis=1)
    degenerate = s <= 0.0
    q = np.empty_like(o)
    ok = ~degenerate
    q[ok] = o[ok] / s[ok, None]
    q[degenerate] = 1.0 / o.shape[1]
    return _Cache(x, a1, h, mask, y, q, s, degenerate)


def forward(params: MlpParameters, inputs) -> np.ndarray:
    """Sampling probabilities for one input vector ``(I,)`` or a batch ``(B, I)``."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.input_size:
        raise ValueError(f"input has {x.shape[1]} features, network expects {params.input_size}")
    q = _forward(params, x).q
    return q[0] if single else q


def forward_distribution(params: MlpParameters, inputs) -> SamplingDistribution:
    return SamplingDistribution(forward(params, np.asarray(inputs, dtype=float).ravel()))


# ------------------------------------------------------------------- loss


def rps_loss(dist, context_values, target: float, loss_scaling: LossScaling | str = LossScaling.NONE) -> float:
    """Sum of quantile losses at the distinct context values, each evaluated at
    its cumulative probability under ``dist``."""
    pred = one_step_distribution(context_values, dist)
    loss = float(np.sum(pinball(pred.support, target, np.minimum(pred.cdf, 1.0))))
    if LossScaling(loss_scaling) is LossScaling.MIN_MAX:
        loss /= _range_scale(context_values)
    return max(loss, 0.0)


def rps_weights(context_values, target: float) -> tuple[np.ndarray, float]:
    """Coefficients ``w`` and offset ``c`` with ``RPS = w @ q + c``.

    The loss is linear in the sampling probabilities ``q``: index ``t``
    contributes ``z - v`` for every distinct value ``v >= z_t``.
    """
    values = np.asarray(context_values, dtype=float)
    support, inverse = np.unique(values, return_inverse=True)
    diff = target - support
    suffix = np.cumsum(diff[::-1])[::-1]
    w = suffix[inverse.ravel()]
    c = float(-np.sum(np.where(target < support, diff, 0.0)))
    return w, c


def _range_scale(values) -> float:
    values = np.asarray(values, dtype=float)
    rng = float(values.max() - values.min())
    return rng if rng >= _TINY else 1.0


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScaleStats:
    mean: float
    std: float
    minimum: float
    maximum: float

    @property
    def loss_scale(self) -> float:
        rng = self.maximum - self.minimum
        return rng if rng >= _TINY else 1.0


def scale_inputs(values, mode: InputScaling | str = InputScaling.NONE) -> tuple[np.ndarray, ScaleStats]:
    """Scale a context window for the network; sampling still uses raw values."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot scale an empty window")
    mean = float(values.mean())
    std = float(values.std())
    stats = ScaleStats(mean, std if std >= _TINY else 1.0, float(values.min()), float(values.max()))
    if InputScaling(mode) is InputScaling.STANDARDIZATION:
        return (values - mean) / stats.std, stats
    return values.copy(), stats


def _scale_rows(windows: np.ndarray, mode: InputScaling) -> np.ndarray:
    if mode is InputScaling.NONE:
        return windows
    mean = windows.mean(axis=1, keepdims=True)
    std = windows.std(axis=1, keepdims=True)
    std = np.where(std < _TINY, 1.0, std)
    return (windows - mean) / std


# ----------------------------------------------------------------- config


@dataclass(frozen=True)
class TrainingConfig:
    context_length: int
    epochs: int = 200
    dropout: float = 0.0
    normalization: Normalization = Normalization.SOFTMAX
    input_scaling: InputScaling = InputScaling.STANDARDIZATION
    loss_scaling: LossScaling = LossScaling.NONE
    static_feat: bool = False
    time_features: bool = True
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        object.__setattr__(self, "input_scaling", InputScaling(self.input_scaling))
        object.__setattr__(self, "loss_scaling", LossScaling(self.loss_scaling))
        if self.context_length < 1:
            raise ValueError(f"context_length must be >= 1, got {self.context_length}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch_size >= 1 and learning_rate > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


#: Hyperparameter grid searched for the network (epochs, dropout, output
#: normalization, input scaling, loss scaling, static feature).
DEEPNPTS_GRID = {
    "epochs": (200, 300),
    "dropout": (0.0, 0.1),
    "normalization": (Normalization.SOFTMAX, Normalization.SUM),
    "input_scaling": (InputScaling.NONE, InputScaling.STANDARDIZATION),
    "loss_scaling": (LossScaling.NONE, LossScaling.MIN_MAX),
    "static_feat": (True, False),
}

#: Context length as a multiple of the prediction length.
CONTEXT_MULTIPLIER = 28
SHORT_HISTORY_CONTEXT_MULTIPLIER = 10


# --------------------------------------------------------------- features


def static_feature(series_id: str) -> float:
    """A stable per-series scalar in [-0.5, 0.5) derived from the id."""
    return zlib.crc32(series_id.encode("utf-8")) / 2**32 - 0.5


@dataclass(frozen=True)
class FeatureLayout:
    """How a window of one series is turned into a network input vector."""

    context_length: int
    freq: Frequency
    time_features: bool = True
    num_dynamic: int = 0
    static_feat: bool = False
    input_scaling: InputScaling = InputScaling.NONE

    @property
    def num_covariates(self) -> int:
        n = self.num_dynamic + int(self.static_feat)
        if self.time_features:
            n += len(feature_names(self.freq))
        return n

    @property
    def input_size(self) -> int:
        return self.context_length + self.num_covariates * (self.context_length + 1)

    def covariate_matrix(self, series: TimeSeries, stop: int) -> np.ndarray:
        """``(D, stop)`` covariates for series indices ``0..stop-1``."""
        rows = []
        if self.time_features:
            stamps = [series.start + series.freq.offset(i) for i in range(stop)]
            rows.append(time_feature_matrix(self.freq, stamps))
        if self.num_dynamic:
            cov = series.covariates
            if cov is None or cov.shape[0] != self.num_dynamic:
                got = 0 if cov is None else cov.shape[0]
                raise ValueError(
                    f"series {series.id!r} has {got} dynamic covariates, model expects {self.num_dynamic}"
                )
            if cov.shape[1] < stop:
                raise ValueError(
                    f"series {series.id!r}: covariates cover {cov.shape[1]} steps, need {stop}"
                )
            rows.append(cov[:, :stop])
        if self.static_feat:
            rows.append(np.full((1, stop), static_feature(series.id)))
        if not rows:
            return np.zeros((0, stop))
        return np.vstack(rows)

    def inputs(self, windows: np.ndarray, covariates: np.ndarray) -> np.ndarray:
        """Network inputs for ``(B, T)`` windows sharing one ``(D, T+1)`` covariate block."""
        windows = np.atleast_2d(windows)
        scaled = _scale_rows(windows, self.input_scaling)
        cov = np.broadcast_to(covariates.ravel(), (windows.shape[0], covariates.size))
        return np.hstack([scaled, cov])


# ----------------------------------------------------------- augmentation


@dataclass(frozen=True)
class TrainingInstance:
    series_id: str
    target_index: int
    context_values: np.ndarray
    context_covariates: np.ndarray
    target: float
    scale_stats: ScaleStats


@dataclass
class AugmentationReport:
    instances: list[TrainingInstance] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def augment(
    series: TimeSeries, context_length: int, prediction_length: int, layout: Optional[FeatureLayout] = None
) -> list[TrainingInstance]:
    """Sliding windows ending 0..P-1 steps before the last observation.

    Window ``k`` covers ``[L-1-k-T, L-2-k]`` and is scored against the value
    at ``L-1-k``. Returns an empty list (and logs a warning) when the series
    is too short for a single window.
    """
    n = len(series)
    T = context_length
    count = min(prediction_length, n - T)
    if count <= 0:
        logger.warning("series %r has %d observations, need %d for training; skipped", series.id, n, T + 1)
        return []
    if layout is None:
        layout = FeatureLayout(T, series.freq, time_features=False)
    cov = layout.covariate_matrix(series, n)
    out = []
    for k in range(count - 1, -1, -1):
        target_index = n - 1 - k
        start = target_index - T
        window = series.values[start:target_index]
        _, stats = scale_inputs(window, layout.input_scaling)
        out.append(
            TrainingInstance(
                series_id=series.id,
                target_index=target_index,
                context_values=window,
                context_covariates=cov[:, start:target_index + 1],
                target=float(series.values[target_index]),
                scale_stats=stats,
            )
        )
    return out


def augment_panel(
    panel: Sequence[TimeSeries], layout: FeatureLayout, prediction_length: int
) -> AugmentationReport:
    report = AugmentationReport()
    for series in panel:
        inst = augment(series, layout.context_length, prediction_length, layout)
        if not inst:
            report.skipped.append(series.id)
        report.instances.extend(inst)
    return report


# ---------------------------------------------------------------- batches


@dataclass
class Batch:
    """Stacked inputs plus the precomputed linear RPS coefficients."""

    x: np.ndarray
    w: np.ndarray
    c: np.ndarray
    scale: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def take(self, idx) -> "Batch":
        return Batch(self.x[idx], self.w[idx], self.c[idx], self.scale[idx])


def make_batch(
    instances: Sequence[TrainingInstance], layout: FeatureLayout, loss_scaling: LossScaling | str = LossScaling.NONE
) -> Batch:
    if not instances:
        raise ValueError("empty batch")
    loss_scaling = LossScaling(loss_scaling)
    xs, ws, cs, scales = [], [], [], []
    for inst in instances:
        xs.append(layout.inputs(inst.context_values, inst.context_covariates)[0])
        w, c = rps_weights(inst.context_values, inst.target)
        ws.append(w)
        cs.append(c)
        scales.append(inst.scale_stats.loss_scale if loss_scaling is LossScaling.MIN_MAX else 1.0)
    return Batch(np.array(xs), np.array(ws), np.array(cs), np.array(scales))


# ---------------------------------------------------------------- gradient


def batch_loss(params: MlpParameters, batch: Batch, mask: Optional[np.ndarray] = None) -> float:
    q = _forward(params, batch.x, mask).q
    return float(np.mean((np.sum(batch.w * q, axis=1) + batch.c) / batch.scale))


def loss_gradient(
    params: MlpParameters, batch: Batch, mask: Optional[np.ndarray] = None
) -> tuple[dict[str, np.ndarray], float]:
    """Mean batch RPS and its exact gradient with respect to every parameter."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    cache = _forward(params, batch.x, mask)
    q = cache.q
    n = len(batch)
    per_instance = (np.sum(batch.w * q, axis=1) + batch.c) / batch.scale
    loss = float(per_instance.mean())

    g_q = batch.w / (batch.scale[:, None] * n)
    inner = np.sum(g_q * q, axis=1, keepdims=True)
    if params.normalization is Normalization.SOFTMAX:
        g_y = q * (g_q - inner)
    else:
        s = np.where(cache.degenerate, 1.0, cache.norm_sum)[:, None]
        g_y = (g_q - inner) / s * (cache.y > 0)
        if np.any(cache.degenerate):
            logger.debug("%d degenerate rows in batch fell back to uniform", int(cache.degenerate.sum()))
            g_y[cache.degenerate] = 0.0

    grads = {
        "w2": g_y.T @ cache.h,
        "b2": g_y.sum(axis=0),
    }
    g_h = g_y @ params.w2
    if mask is not None:
        g_h = g_h * mask
    g_a1 = g_h * (cache.a1 > 0)
    grads["w1"] = g_a1.T @ cache.x
    grads["b1"] = g_a1.sum(axis=0)
    return grads, loss


# ---------------------------------------------------------------- training


class Adam:
    def __init__(self, params: MlpParameters, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.t = 0

    def step(self, params: MlpParameters, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            getattr(params, name)[...] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainingLog:
    epoch_losses: list[float] = field(default_factory=list)
    num_instances: int = 0
    skipped_series: list[str] = field(default_factory=list)
    degenerate_batches: int = 0


@dataclass
class DeepNPTSNetwork:
    """Trained parameters together with everything needed to build inputs."""

    params: MlpParameters
    layout: FeatureLayout
    loss_scaling: LossScaling = LossScaling.NONE

    @property
    def context_length(self) -> int:
        return self.layout.context_length

    def source_for(self, series: TimeSeries, horizon: int):
        """A per-step distribution source for :func:`~nptsforecast.forecaster.forecast_paths`."""
        stop = len(series) + horizon
        cov = self.layout.covariate_matrix(series, stop)
        T = self.context_length

        def source(windows: np.ndarray, target_index: int) -> np.ndarray:
            block = cov[:, target_index - T:target_index + 1]
            return forward(self.params, self.layout.inputs(windows, block))

        return source

    def probe(self, series: TimeSeries) -> np.ndarray:
        """Probabilities over the last ``T`` observations for the next step."""
        T = self.context_length
        n = len(series)
        if n < T:
            raise ValueError(f"series {series.id!r} has {n} observations, model needs {T}")
        return self.source_for(series, 1)(series.values[None, n - T:], n)[0]

    # -- persistence

    def save(self, path) -> None:
        meta = {
            "format_version": FORMAT_VERSION,
            "normalization": self.params.normalization.value,
            "context_length": self.layout.context_length,
            "hidden": int(self.params.w1.shape[0]),
            "input_size": self.params.input_size,
            "freq": str(self.layout.freq),
            "time_features": self.layout.time_features,
            "num_dynamic": self.layout.num_dynamic,
            "static_feat": self.layout.static_feat,
            "input_scaling": self.layout.input_scaling.value,
            "loss_scaling": self.loss_scaling.value,
        }
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **self.params.arrays())

    @classmethod
    def load(cls, path) -> "DeepNPTSNetwork":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(
                    f"{path}: unsupported model format version {meta.get('format_version')}, "
                    f"expected {FORMAT_VERSION}"
                )
            arrays = {name: data[name].copy() for name in MlpParameters.NAMES}
        params = MlpParameters(**arrays, normalization=Normalization(meta["normalization"]))
        layout = FeatureLayout(
            context_length=meta["context_length"],
            freq=Frequency.parse(meta["freq"]),
            time_features=meta["time_features"],
            num_dynamic=meta["num_dynamic"],
            static_feat=meta["static_feat"],
            input_scaling=InputScaling(meta["input_scaling"]),
        )
        if layout.input_size != params.input_size or params.context_length != layout.context_length:
            raise ValueError(f"{path}: weight shapes do not match the stored layout")
        return cls(params, layout, LossScaling(meta["loss_scaling"]))


def layout_for(panel: Sequence[TimeSeries], config: TrainingConfig) -> FeatureLayout:
    if not panel:
        raise ValueError("empty panel")
    freq = panel[0].freq
    dyn = {0 if s.covariates is None else s.covariates.shape[0] for s in panel}
    if len(dyn) != 1:
        raise ValueError(f"series disagree on the number of dynamic covariates: {sorted(dyn)}")
    return FeatureLayout(
        context_length=config.context_length,
        freq=freq,
        time_features=config.time_features,
        num_dynamic=dyn.pop(),
        static_feat=config.static_feat,
        input_scaling=config.input_scaling,
    )


def train(
    panel: Sequence[TimeSeries], config: TrainingConfig, prediction_length: int
) -> tuple[DeepNPTSNetwork, TrainingLog]:
    """Fit one shared network on windows pooled from every series of ``panel``."""
    layout = layout_for(panel, config)
    report = augment_panel(panel, layout, prediction_length)
    if not report.instances:
        raise ValueError(
            f"no series is long enough for training (need > {config.context_length} observations)"
        )
    data = make_batch(report.instances, layout, config.loss_scaling)
    rng = np.random.default_rng(config.seed)
    params = init_parameters(layout.input_size, config.context_length, config.normalization, rng=rng)
    opt = Adam(params, lr=config.learning_rate)
    log = TrainingLog(num_instances=len(data), skipped_series=report.skipped)
    hidden = params.w1.shape[0]
    keep = 1.0 - config.dropout

    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for b, start in enumerate(range(0, len(data), config.batch_size)):
            batch = data.take(order[start:start + config.batch_size])
            mask = None
            if config.dropout > 0:
                mask = (rng.random((len(batch), hidden)) < keep) / keep
            grads, loss = loss_gradient(params, batch, mask)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(params, grads)
            params.check_finite(f"after epoch {epoch}, batch {b}")
            total += loss * len(batch)
        log.epoch_losses.append(total / len(data))
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            logger.debug("epoch %d: mean RPS %.6g", epoch, log.epoch_losses[-1])

    return DeepNPTSNetwork(params, layout, config.loss_scaling), log


def training_loss(network: DeepNPTSNetwork, instances: Sequence[TrainingInstance]) -> float:
    """Mean RPS of ``network`` (without dropout) over ``instances``."""
    return batch_loss(network.params, make_batch(instances, network.layout, network.loss_scaling))
