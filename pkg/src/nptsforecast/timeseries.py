"""Univariate series container, calendar arithmetic and calendar time features."""

from __future__ import annotations

import calendar
import enum
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional, Sequence

import numpy as np
from dateutil.relativedelta import relativedelta


class FreqUnit(str, enum.Enum):
    MINUTE = "min"
    HOURLY = "H"
    DAILY = "D"
    WEEKLY = "W"
    MONTHLY = "M"


_FREQ_RE = re.compile(r"^\s*(\d*)\s*(min|T|H|h|D|d|W|w|M)\s*$")
_UNIT_ALIASES = {
    "min": FreqUnit.MINUTE,
    "T": FreqUnit.MINUTE,
    "H": FreqUnit.HOURLY,
    "h": FreqUnit.HOURLY,
    "D": FreqUnit.DAILY,
    "d": FreqUnit.DAILY,
    "W": FreqUnit.WEEKLY,
    "w": FreqUnit.WEEKLY,
    "M": FreqUnit.MONTHLY,
}


@dataclass(frozen=True)
class Frequency:
    """Sampling frequency of a series.

    Only minute data may carry a multiple other than 1 (``30min``); every
    other unit is a single calendar step.
    """

    unit: FreqUnit
    multiple: int = 1

    def __post_init__(self):
        if self.multiple < 1:
            raise ValueError(f"frequency multiple must be >= 1, got {self.multiple}")
        if self.unit is not FreqUnit.MINUTE and self.multiple != 1:
            raise ValueError(f"multiples are only supported for minute data, got {self}")

    @classmethod
    def parse(cls, text: str) -> "Frequency":
        """Parse strings such as ``"H"``, ``"30min"``, ``"D"``, ``"W"``, ``"M"``."""
        m = _FREQ_RE.match(str(text))
        if m is None:
            raise ValueError(f"unparseable frequency {text!r}")
        mult = int(m.group(1)) if m.group(1) else 1
        return cls(_UNIT_ALIASES[m.group(2)], mult)

    def __str__(self) -> str:
        if self.unit is FreqUnit.MINUTE:
            return f"{self.multiple}min"
        return self.unit.value

    def offset(self, steps: int):
        if self.unit is FreqUnit.MINUTE:
            return timedelta(minutes=self.multiple * steps)
        if self.unit is FreqUnit.HOURLY:
            return timedelta(hours=steps)
        if self.unit is FreqUnit.DAILY:
            return timedelta(days=steps)
        if self.unit is FreqUnit.WEEKLY:
            return timedelta(weeks=steps)
        return relativedelta(months=steps)

    @property
    def season_length(self) -> int:
        """Number of steps in the dominant calendar cycle (used by seasonal naive)."""
        if self.unit is FreqUnit.MINUTE:
            return max(1, (24 * 60) // self.multiple)
        return {
            FreqUnit.HOURLY: 24,
            FreqUnit.DAILY: 7,
            FreqUnit.WEEKLY: 52,
            FreqUnit.MONTHLY: 12,
        }[self.unit]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One univariate series.

    ``covariates`` is a ``(D, L + extra)`` matrix whose columns are aligned
    with the series index; columns past the last observation hold the known
    future values.
    """

    id: str
    start: datetime
    freq: Frequency
    values: np.ndarray
    covariates: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError(f"series {self.id!r}: values must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"series {self.id!r}: values contain NaN or inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.start.tzinfo is not None:
            raise ValueError(f"series {self.id!r}: start timestamp must be timezone-naive")
        if self.covariates is not None:
            cov = np.array(self.covariates, dtype=float)
            if cov.ndim != 2 or cov.shape[1] < values.size:
                raise ValueError(
                    f"series {self.id!r}: covariates must be a (D, >= {values.size}) matrix, "
                    f"got shape {cov.shape}"
                )
            if not np.all(np.isfinite(cov)):
                raise ValueError(f"series {self.id!r}: covariates contain NaN or inf")
            cov.setflags(write=False)
            object.__setattr__(self, "covariates", cov)

    def __len__(self) -> int:
        return self.values.size

    def timestamp(self, index: int) -> datetime:
        return timestamp_at(self, index)

    def timestamps(self, start: int, stop: int) -> list[datetime]:
        return [timestamp_at(self, i) for i in range(start, stop)]

    def truncate(self, length: int) -> "TimeSeries":
        """Keep the first ``length`` observations; covariates are kept whole."""
        if not 1 <= length <= len(self):
            raise ValueError(f"cannot truncate series of length {len(self)} to {length}")
        return TimeSeries(self.id, self.start, self.freq, self.values[:length], self.covariates)


def timestamp_at(series: TimeSeries, index: int) -> datetime:
    """Timestamp of observation ``index``: ``start`` advanced ``index`` steps."""
    if index < 0:
        raise ValueError(f"index must be non-negative, got {index}")
    try:
        return series.start + series.freq.offset(int(index))
    except (OverflowError, ValueError) as exc:
        raise OverflowError(
            f"timestamp for index {index} of series {series.id!r} is outside the calendar range"
        ) from exc


def feature_names(freq: Frequency) -> list[str]:
    """Names of the calendar features produced for ``freq``, in order."""
    if freq.unit is FreqUnit.MINUTE:
        return ["minute_of_hour", "hour_of_day", "day_of_week", "day_of_month", "day_of_year"]
    if freq.unit is FreqUnit.HOURLY:
        return ["hour_of_day", "day_of_week", "day_of_month", "day_of_year"]
    if freq.unit is FreqUnit.DAILY:
        return ["day_of_week", "day_of_month", "day_of_year"]
    if freq.unit is FreqUnit.WEEKLY:
        return ["week_of_year"]
    return ["month_of_year"]


def seasonal_feature_names(freq: Frequency) -> list[str]:
    """The calendar features that define a "season" for seasonal kernels."""
    if freq.unit is FreqUnit.MINUTE:
        return ["minute_of_hour", "hour_of_day"]
    return feature_names(freq)[:1]


def _position(name: str, ts: datetime) -> tuple[int, int]:
    # (zero-based position, cycle length)
    if name == "minute_of_hour":
        return ts.minute, 60
    if name == "hour_of_day":
        return ts.hour, 24
    if name == "day_of_week":
        return ts.weekday(), 7
    if name == "day_of_month":
        return ts.day - 1, 31
    if name == "day_of_year":
        year_len = 366 if calendar.isleap(ts.year) else 365
        return ts.timetuple().tm_yday - 1, year_len
    if name == "week_of_year":
        return ts.isocalendar()[1] - 1, 53
    if name == "month_of_year":
        return ts.month - 1, 12
    raise KeyError(name)


def time_features(freq: Frequency, timestamp: datetime, names: Sequence[str] | None = None) -> np.ndarray:
    """Calendar features of ``timestamp``, each ``position / cycle - 0.5`` in [-0.5, 0.5).

    Week of year follows ISO-8601 week numbering.
    """
    if names is None:
        names = feature_names(freq)
    out = np.empty(len(names))
    for i, name in enumerate(names):
        pos, cycle = _position(name, timestamp)
        out[i] = pos / cycle - 0.5
    return out


def time_feature_matrix(
    freq: Frequency, timestamps: Sequence[datetime], names: Sequence[str] | None = None
) -> np.ndarray:
    """Stack :func:`time_features` for many timestamps into a ``(D, len)`` matrix."""
    if names is None:
        names = feature_names(freq)
    mat = np.empty((len(names), len(timestamps)))
    for j, ts in enumerate(timestamps):
        mat[:, j] = time_features(freq, ts, names)
    return mat


def feature_distance(a, b) -> float:
    """L1 distance between two feature vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())
