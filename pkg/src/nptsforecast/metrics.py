"""Quantile loss, its normalized mean over a level grid, and coverage."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


def pinball(q, z, alpha):
    """``(alpha - 1{z < q}) * (z - q)`` without range checks on ``alpha``."""
    q = np.asarray(q, dtype=float)
    z = np.asarray(z, dtype=float)
    return (alpha - (z < q)) * (z - q)


def quantile_loss(q, z, alpha):
    """Quantile (pinball) loss of predicted quantile ``q`` against actual ``z``.

    Broadcasts over arrays; returns a float for scalar input.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any((a <= 0) | (a >= 1)):
        raise ValueError(f"quantile level must lie in (0, 1), got {alpha}")
    out = pinball(q, z, a)
    return float(out) if np.ndim(out) == 0 else out


def quantile_loss_sums(quantiles, actuals, levels: Sequence[float]) -> tuple[float, float]:
    """Numerator and denominator of the normalized mean quantile loss.

    ``quantiles`` has shape ``(len(levels), *actuals.shape)``. The numerator
    sums the loss over every level and point, the denominator is
    ``sum(|actual|) * len(levels)``.
    """
    q = np.asarray(quantiles, dtype=float)
    z = np.asarray(actuals, dtype=float)
    levels = np.asarray(levels, dtype=float)
    if q.shape != (levels.size,) + z.shape:
        raise ValueError(f"quantiles shape {q.shape} does not match {levels.size} levels x {z.shape}")
    a = levels.reshape((-1,) + (1,) * z.ndim)
    num = float(np.sum(pinball(q, z[None], a)))
    den = float(np.sum(np.abs(z))) * levels.size
    return num, den


def mean_quantile_loss(quantiles, actuals, levels: Sequence[float], return_flag: bool = False):
    """Quantile loss summed over points and levels, divided by ``sum(|actual|)``
    and by the number of levels.

    When every actual is zero the normalizer vanishes; the plain mean over
    points and levels is returned instead and, with ``return_flag``, the
    second element of the returned pair is ``False``.
    """
    num, den = quantile_loss_sums(quantiles, actuals, levels)
    normalized = den > 0
    if normalized:
        value = num / den
    else:
        count = np.size(actuals) * len(levels)
        value = num / count if count else 0.0
        logger.warning("all actuals are zero; reporting the unnormalized mean quantile loss")
    return (value, normalized) if return_flag else value


def coverage(quantiles, actuals) -> float:
    """Fraction of actuals at or below the predicted quantile."""
    q = np.asarray(quantiles, dtype=float)
    z = np.asarray(actuals, dtype=float)
    if q.shape != z.shape:
        raise ValueError(f"shape mismatch: {q.shape} vs {z.shape}")
    if z.size == 0:
        raise ValueError("coverage needs at least one point")
    return float(np.mean(z <= q))


def coverage_table(quantiles, actuals, levels: Sequence[float]) -> dict[float, float]:
    return {float(a): coverage(quantiles[i], actuals) for i, a in enumerate(levels)}


def calibration_errors(cov: dict[float, float]) -> dict[float, float]:
    return {a: abs(c - a) for a, c in cov.items()}
