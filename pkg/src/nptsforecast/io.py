"""Line-delimited dataset ingestion and forecast record emission."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .forecaster import ForecastResult
from .timeseries import Frequency, TimeSeries


class DatasetError(ValueError):
    """Raised with every per-line problem found in a dataset file."""

    def __init__(self, path, problems: Sequence[tuple[int, str]]):
        self.path = str(path)
        self.problems = list(problems)
        lines = "\n".join(f"  line {n}: {msg}" if n else f"  {msg}" for n, msg in self.problems[:20])
        more = f"\n  ... {len(self.problems) - 20} more" if len(self.problems) > 20 else ""
        super().__init__(f"{self.path}: {len(self.problems)} problem(s)\n{lines}{more}")


@dataclass(frozen=True)
class DatasetManifest:
    path: Path
    freq: Frequency
    prediction_length: int
    num_windows: int = 1
    num_dynamic: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if isinstance(self.freq, str):
            object.__setattr__(self, "freq", Frequency.parse(self.freq))
        if self.prediction_length < 1:
            raise ValueError(f"prediction_length must be >= 1, got {self.prediction_length}")
        if self.num_windows < 1:
            raise ValueError(f"num_windows must be >= 1, got {self.num_windows}")

    @classmethod
    def from_json(cls, path) -> "DatasetManifest":
        """Read a manifest file; a relative ``path`` entry resolves against the manifest's directory."""
        path = Path(path)
        spec = json.loads(path.read_text())
        data = Path(spec["path"])
        if not data.is_absolute():
            data = path.parent / data
        return cls(
            data,
            Frequency.parse(spec["freq"]),
            int(spec["prediction_length"]),
            int(spec.get("num_windows", 1)),
            spec.get("num_dynamic"),
        )


def parse_timestamp(text) -> datetime:
    if not isinstance(text, str):
        raise ValueError(f"start must be an ISO-8601 string, got {text!r}")
    ts = datetime.fromisoformat(text.strip())
    if ts.tzinfo is not None:
        raise ValueError(f"start {text!r} carries a timezone; timestamps must be naive")
    return ts


def _numbers(seq, what: str) -> np.ndarray:
    if not isinstance(seq, list):
        raise ValueError(f"{what} must be an array of numbers")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in seq):
        raise ValueError(f"{what} contains non-numeric entries")
    arr = np.array(seq, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or infinite values")
    return arr


def parse_record(record: dict, manifest: DatasetManifest) -> TimeSeries:
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    sid = record.get("id", record.get("item_id"))
    if not isinstance(sid, str) or not sid:
        raise ValueError("missing string field 'id'")
    if "start" not in record:
        raise ValueError("missing field 'start'")
    start = parse_timestamp(record["start"])
    if "target" not in record:
        raise ValueError("missing field 'target'")
    target = _numbers(record["target"], "target")
    if target.size == 0:
        raise ValueError("target is empty")
    cov = None
    if record.get("feat_dynamic_real") is not None:
        rows = record["feat_dynamic_real"]
        if not isinstance(rows, list) or not rows:
            raise ValueError("feat_dynamic_real must be a non-empty array of arrays")
        expected = target.size + manifest.prediction_length
        parsed = []
        for j, row in enumerate(rows):
            arr = _numbers(row, f"feat_dynamic_real[{j}]")
            if arr.size != expected:
                raise ValueError(
                    f"feat_dynamic_real[{j}] has length {arr.size}, expected target length + "
                    f"prediction length = {expected}"
                )
            parsed.append(arr)
        cov = np.vstack(parsed)
        if manifest.num_dynamic is not None and cov.shape[0] != manifest.num_dynamic:
            raise ValueError(f"expected {manifest.num_dynamic} dynamic covariates, got {cov.shape[0]}")
    return TimeSeries(sid, start, manifest.freq, target, cov)


def load_dataset(manifest: DatasetManifest) -> list[TimeSeries]:
    """Parse every line of the manifest's file; collect all problems before raising."""
    path = manifest.path
    if not path.is_file():
        raise FileNotFoundError(f"dataset file {path} does not exist")
    panel: list[TimeSeries] = []
    problems: list[tuple[int, str]] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                series = parse_record(json.loads(line), manifest)
            except (ValueError, TypeError) as exc:
                problems.append((lineno, str(exc)))
                continue
            if series.id in seen:
                problems.append((lineno, f"duplicate id {series.id!r} (first seen on line {seen[series.id]})"))
                continue
            seen[series.id] = lineno
            panel.append(series)
    if problems:
        raise DatasetError(path, problems)
    if not panel:
        raise DatasetError(path, [(0, "no series")])
    dyn = {0 if s.covariates is None else s.covariates.shape[0] for s in panel}
    if len(dyn) > 1:
        raise DatasetError(path, [(0, f"series disagree on the number of dynamic covariates: {sorted(dyn)}")])
    return panel


def _round6(x: float) -> float:
    return float(f"{x:.6g}")


def series_record(series: TimeSeries) -> dict:
    rec = {"id": series.id, "start": series.start.isoformat(timespec="minutes"), "target": series.values.tolist()}
    if series.covariates is not None:
        rec["feat_dynamic_real"] = series.covariates.tolist()
    return rec


def write_dataset(panel: Iterable[TimeSeries], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for series in panel:
            rec = series_record(series)
            rec["target"] = [_round6(x) for x in rec["target"]]
            fh.write(json.dumps(rec) + "\n")


def forecast_record(series: TimeSeries, result: ForecastResult, include_samples: bool = False) -> dict:
    rec = {
        "series_id": series.id,
        "forecast_start": series.timestamp(result.start_index).isoformat(timespec="minutes"),
        "quantiles": {f"{a:.2f}": [_round6(v) for v in curve] for a, curve in sorted(result.quantiles.items())},
    }
    if include_samples:
        rec["samples"] = [[_round6(v) for v in row] for row in result.samples]
    return rec


def write_forecasts(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in sorted(records, key=lambda r: r["series_id"]):
            fh.write(json.dumps(rec) + "\n")


def read_forecasts(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def histogram(panel: Sequence[TimeSeries], holdout: int = 0, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Counts and bin edges of the pooled training values (the last
    ``holdout`` steps of each series excluded)."""
    parts = [s.values[: max(len(s) - holdout, 0)] for s in panel]
    values = np.concatenate(parts) if parts else np.empty(0)
    if values.size == 0:
        raise ValueError("no training values left after removing the held-out steps")
    counts, edges = np.histogram(values, bins=bins)
    return counts, edges
