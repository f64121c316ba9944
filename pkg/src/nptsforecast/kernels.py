"""Sampling distributions over the indices of a context window."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Sequence

import numpy as np

from .timeseries import Frequency, seasonal_feature_names, time_feature_matrix, time_features

LAMBDA_GRID = (1.0, 0.75, 0.5, 0.25, 0.1)


class KernelKind(str, enum.Enum):
    UNIFORM = "uniform"
    EXPONENTIAL = "exponential"
    SEASONAL_UNIFORM = "seasonal-uniform"
    SEASONAL_EXPONENTIAL = "seasonal-exponential"

    @property
    def seasonal(self) -> bool:
        return self in (KernelKind.SEASONAL_UNIFORM, KernelKind.SEASONAL_EXPONENTIAL)

    @property
    def exponential(self) -> bool:
        return self in (KernelKind.EXPONENTIAL, KernelKind.SEASONAL_EXPONENTIAL)


@dataclass(frozen=True)
class KernelSpec:
    """Which weighting to use, the decay rate ``lam`` and, for seasonal kinds,
    the frequency whose calendar features measure distance between steps.

    ``features`` overrides the calendar features used by seasonal kernels;
    the default is the frequency's seasonal cycle (hour of day for hourly
    data, day of week for daily data, ...).
    """

    kind: KernelKind
    lam: Optional[float] = None
    freq: Optional[Frequency] = None
    features: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind.exponential:
            if self.lam is None or not math.isfinite(self.lam):
                raise ValueError(f"{self.kind.value} kernel needs a finite lambda, got {self.lam}")
            if self.lam <= 0:
                raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.kind.seasonal and self.freq is None:
            raise ValueError(f"{self.kind.value} kernel needs a frequency")

    @property
    def feature_set(self) -> list[str]:
        if self.features is not None:
            return list(self.features)
        return seasonal_feature_names(self.freq)


class SamplingDistribution:
    """Categorical distribution over context indices ``0..T-1``.

    The cumulative vector is precomputed so draws are a single binary search.
    """

    __slots__ = ("probabilities", "_cdf")

    def __init__(self, probabilities, *, atol: float = 1e-9):
        p = np.array(probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("sampling distribution needs at least one state")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("sampling probabilities must be finite and non-negative")
        total = p.sum()
        if abs(total - 1.0) > atol:
            raise ValueError(f"sampling probabilities sum to {total!r}, expected 1")
        p.setflags(write=False)
        self.probabilities = p
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        self._cdf = cdf

    def __len__(self) -> int:
        return self.probabilities.size

    def __repr__(self) -> str:
        return f"SamplingDistribution({np.array2string(self.probabilities, precision=4)})"

    @classmethod
    def from_weights(cls, weights) -> "SamplingDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def index_for(self, u):
        """Inverse-CDF lookup for uniform draw(s) ``u`` in [0, 1)."""
        return np.searchsorted(self._cdf, u, side="right")


def index_offsets(num_context: int) -> np.ndarray:
    """Steps between each context index and the target: ``T - t``."""
    return num_context - np.arange(num_context, dtype=float)


def exponential_weights(offsets, lam: float) -> np.ndarray:
    """Unnormalized ``exp(-lam * offset)``, shifted so the largest weight is 1."""
    offsets = np.asarray(offsets, dtype=float)
    return np.exp(-lam * (offsets - offsets.min()))


def seasonal_weights(context_features: np.ndarray, target_features: np.ndarray, kind: KernelKind, lam=None):
    """Weights from L1 calendar distances; ``context_features`` is ``(D, T)``."""
    dist = np.abs(context_features - target_features[:, None]).sum(axis=0)
    if kind is KernelKind.SEASONAL_UNIFORM:
        # exact argmin set; feature values are multiples of 1/cycle so rounding
        # noise only needs a tiny tolerance
        return (dist <= dist.min() + 1e-12).astype(float)
    return np.exp(-lam * (dist - dist.min()))


def kernel_weights(
    spec: KernelSpec,
    context_timestamps: Sequence[datetime],
    target_timestamp: datetime | None = None,
) -> SamplingDistribution:
    """Sampling distribution over a contiguous context window.

    Context index ``t`` sits ``T - t`` steps before the target. Seasonal kinds
    compare calendar features of each context timestamp with the target's.
    """
    num = len(context_timestamps)
    if num == 0:
        raise ValueError("empty context")
    if spec.kind is KernelKind.UNIFORM:
        w = np.ones(num)
    elif spec.kind is KernelKind.EXPONENTIAL:
        w = exponential_weights(index_offsets(num), spec.lam)
    else:
        if target_timestamp is None:
            raise ValueError("seasonal kernels need the target timestamp")
        if target_timestamp <= context_timestamps[-1]:
            raise ValueError("target timestamp must come after the context window")
        names = spec.feature_set
        ctx = time_feature_matrix(spec.freq, context_timestamps, names)
        tgt = time_features(spec.freq, target_timestamp, names)
        w = seasonal_weights(ctx, tgt, spec.kind, spec.lam)
    return SamplingDistribution.from_weights(w)


def sample_index(dist: SamplingDistribution, rng: np.random.Generator) -> int:
    """Draw one context index by inverse CDF using a single uniform draw."""
    return int(dist.index_for(rng.random()))
