"""Synthetic panels used by the tests, the examples and the ``synth`` command."""

from __future__ import annotations

from datetime import datetime

import numpy as np

from .timeseries import Frequency, TimeSeries

DEFAULT_START = datetime(2015, 1, 1)
KINDS = ("constant", "random-walk", "sinusoid", "intermittent", "iid")


def _panel(values: np.ndarray, freq: Frequency, start: datetime, prefix: str) -> list[TimeSeries]:
    # zero-padded so string order matches generation order
    width = len(str(max(len(values) - 1, 0)))
    return [TimeSeries(f"{prefix}{i:0{width}d}", start, freq, row) for i, row in enumerate(values)]


def constant(num_series: int, length: int, freq=Frequency.parse("H"), start=DEFAULT_START, seed: int = 0):
    rng = np.random.default_rng(seed)
    levels = rng.integers(0, 100, size=num_series).astype(float)
    return _panel(np.repeat(levels[:, None], length, axis=1), freq, start, "constant-")


def random_walk(num_series: int, length: int, freq=Frequency.parse("D"), start=DEFAULT_START, seed: int = 0, step: float = 1.0):
    rng = np.random.default_rng(seed)
    steps = rng.normal(0.0, step, size=(num_series, length))
    return _panel(100.0 + np.cumsum(steps, axis=1), freq, start, "rw-")


def sinusoid(
    num_series: int,
    length: int,
    period: int = 24,
    noise: float = 0.1,
    freq=Frequency.parse("H"),
    start=DEFAULT_START,
    seed: int = 0,
):
    """``level + amplitude * sin(2 pi (t + phase) / period) + noise``, one random
    level, amplitude and phase per series."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    level = rng.uniform(5.0, 15.0, size=(num_series, 1))
    amp = rng.uniform(1.0, 3.0, size=(num_series, 1))
    phase = rng.integers(0, period, size=(num_series, 1))
    vals = level + amp * np.sin(2 * np.pi * (t + phase) / period)
    if noise > 0:
        vals = vals + rng.normal(0.0, noise, size=vals.shape)
    return _panel(vals, freq, start, "sin-")


def intermittent(
    num_series: int, length: int, zero_prob: float = 0.7, freq=Frequency.parse("D"), start=DEFAULT_START, seed: int = 0
):
    rng = np.random.default_rng(seed)
    demand = rng.poisson(5.0, size=(num_series, length)) + 1
    zeros = rng.random((num_series, length)) < zero_prob
    return _panel(np.where(zeros, 0, demand).astype(float), freq, start, "int-")


def iid(num_series: int, length: int, freq=Frequency.parse("D"), start=DEFAULT_START, seed: int = 0):
    """Independent standard-normal draws: the setting where the climatological
    (uniform-kernel) forecaster is calibrated."""
    rng = np.random.default_rng(seed)
    return _panel(rng.normal(size=(num_series, length)), freq, start, "iid-")


def generate(kind: str, num_series: int, length: int, *, freq=None, seed: int = 0, period: int = 24,
             noise: float = 0.1, zero_prob: float = 0.7, start=DEFAULT_START) -> list[TimeSeries]:
    if kind == "constant":
        return constant(num_series, length, freq or Frequency.parse("H"), start, seed)
    if kind == "random-walk":
        return random_walk(num_series, length, freq or Frequency.parse("D"), start, seed)
    if kind == "sinusoid":
        return sinusoid(num_series, length, period, noise, freq or Frequency.parse("H"), start, seed)
    if kind == "intermittent":
        return intermittent(num_series, length, zero_prob, freq or Frequency.parse("D"), start, seed)
    if kind == "iid":
        return iid(num_series, length, freq or Frequency.parse("D"), start, seed)
    raise ValueError(f"unknown synthetic kind {kind!r}; choose from {', '.join(KINDS)}")
