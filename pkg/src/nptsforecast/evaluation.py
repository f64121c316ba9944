"""Rolling-window backtests and grid-search tuning.

A backtest holds out the last ``tau = P * W`` steps of every series. When a
grid of candidate configurations is given, each candidate is first scored on
a validation split: trained on the first ``L - 2*tau`` steps and forecast
over the ``tau`` steps that follow. The best candidate is retrained on the
first ``L - tau`` steps and forecast over the held-out windows one at a time,
with the true values revealed between windows.

The aggregate quantile loss pools every (series, step) pair: total loss over
all points and levels divided by ``sum(|actual|) * n_levels``.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from .forecaster import DEFAULT_NUM_SAMPLES, QUANTILE_LEVELS
from .metrics import calibration_errors, coverage_table, quantile_loss_sums
from .models import Forecaster
from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

ModelFactory = Callable[[Mapping[str, Any]], Forecaster]


@dataclass(frozen=True)
class BacktestPlan:
    prediction_length: int
    num_windows: int = 1
    levels: tuple[float, ...] = QUANTILE_LEVELS

    def __post_init__(self):
        if self.prediction_length < 1 or self.num_windows < 1:
            raise ValueError("prediction_length and num_windows must be >= 1")
        object.__setattr__(self, "levels", tuple(float(a) for a in self.levels))

    @property
    def tau(self) -> int:
        return self.prediction_length * self.num_windows


@dataclass
class WindowForecasts:
    """Quantile forecasts and actuals for every series over the evaluated steps.

    ``quantiles`` is ``(n_levels, n_series, tau)``; ``actuals`` is ``(n_series, tau)``.
    """

    series_ids: list[str]
    levels: tuple[float, ...]
    quantiles: np.ndarray
    actuals: np.ndarray
    start_indices: list[int]

    def per_series_loss(self) -> dict[str, float]:
        out = {}
        for i, sid in enumerate(self.series_ids):
            num, den = quantile_loss_sums(self.quantiles[:, i], self.actuals[i], self.levels)
            out[sid] = num / den if den > 0 else num / (self.actuals[i].size * len(self.levels))
        return out

    def mean_loss(self) -> tuple[float, bool]:
        num, den = quantile_loss_sums(self.quantiles, self.actuals, self.levels)
        if den > 0:
            return num / den, True
        return num / (self.actuals.size * len(self.levels)), False

    def coverage(self) -> dict[float, float]:
        n_levels = len(self.levels)
        return coverage_table(self.quantiles.reshape(n_levels, -1), self.actuals.ravel(), self.levels)


@dataclass
class CandidateScore:
    params: dict
    score: Optional[float]
    error: Optional[str] = None


@dataclass
class TuneResult:
    best: dict
    best_score: float
    scores: list[CandidateScore]
    best_index: int = 0


@dataclass
class BacktestReport:
    model: str
    dataset: str
    levels: tuple[float, ...]
    mean_quantile_loss: float
    normalized: bool
    per_series: dict[str, float]
    coverage: dict[float, float]
    calibration_error: dict[float, float]
    wall_clock: float
    params: dict = field(default_factory=dict)
    tuning: Optional[TuneResult] = None
    forecasts: Optional[WindowForecasts] = None

    @property
    def max_calibration_error(self) -> float:
        return max(self.calibration_error.values())


def series_seed(seed: int, series_index: int, window: int) -> int:
    """Independent, reproducible seed for one (series, window) forecast."""
    return int(np.random.SeedSequence([seed, series_index, window]).generate_state(1)[0])


def _check_lengths(panel: Sequence[TimeSeries], required: int, what: str) -> None:
    for s in panel:
        if len(s) < required:
            raise ValueError(
                f"series {s.id!r} has {len(s)} observations; {what} needs at least {required}"
            )


def evaluate_windows(
    model: Forecaster,
    panel: Sequence[TimeSeries],
    plan: BacktestPlan,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    threads: Optional[int] = None,
) -> WindowForecasts:
    """Fit on everything but the last ``tau`` steps, then forecast the ``W``
    windows in turn, each from the true history up to its start."""
    tau = plan.tau
    _check_lengths(panel, tau + 1, f"a backtest with {plan.num_windows} x {plan.prediction_length} steps")
    model.fit([s.truncate(len(s) - tau) for s in panel])

    P = plan.prediction_length
    n_levels = len(plan.levels)

    def run(i: int):
        series = panel[i]
        cut = len(series) - tau
        q = np.empty((n_levels, tau))
        for w in range(plan.num_windows):
            history = series.truncate(cut + w * P)
            res = model.predict(history, P, num_samples, series_seed(seed, i, w), plan.levels)
            q[:, w * P:(w + 1) * P] = res.quantile_matrix(plan.levels)
        return q, series.values[cut:], cut

    n_threads = threads or os.cpu_count() or 1
    if n_threads > 1 and len(panel) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run, range(len(panel))))
    else:
        results = [run(i) for i in range(len(panel))]

    quantiles = np.stack([r[0] for r in results], axis=1)
    actuals = np.stack([r[1] for r in results])
    return WindowForecasts([s.id for s in panel], plan.levels, quantiles, actuals, [r[2] for r in results])


def tune(
    factory: ModelFactory,
    grid: Sequence[Mapping[str, Any]],
    panel: Sequence[TimeSeries],
    plan: BacktestPlan,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    threads: Optional[int] = None,
) -> TuneResult:
    """Score every candidate on the last ``tau`` steps of ``panel``; lowest
    mean quantile loss wins, earlier candidates win ties.

    A candidate that raises is recorded with its error and skipped.
    """
    if not grid:
        raise ValueError("empty grid")
    scores: list[CandidateScore] = []
    best: Optional[CandidateScore] = None
    best_index = -1
    for i, params in enumerate(grid):
        params = dict(params)
        try:
            fc = evaluate_windows(factory(params), panel, plan, num_samples, seed, threads)
            score = fc.mean_loss()[0]
        except Exception as exc:  # fail-safe: one bad candidate must not sink the search
            logger.warning("candidate %s failed: %s", params, exc)
            scores.append(CandidateScore(params, None, f"{type(exc).__name__}: {exc}"))
            continue
        cand = CandidateScore(params, score)
        scores.append(cand)
        if best is None or score < best.score:
            best, best_index = cand, i
    if best is None:
        raise RuntimeError("every candidate in the grid failed: " + "; ".join(c.error for c in scores))
    return TuneResult(best.params, best.score, scores, best_index)


def rolling_backtest(
    panel: Sequence[TimeSeries],
    factory: ModelFactory,
    plan: BacktestPlan,
    grid: Optional[Sequence[Mapping[str, Any]]] = None,
    *,
    model_name: str = "",
    dataset_name: str = "",
    num_samples: int = DEFAULT_NUM_SAMPLES,
    seed: int = 0,
    threads: Optional[int] = None,
) -> BacktestReport:
    """Tune on the training region (when ``grid`` has several candidates),
    retrain, and evaluate on the held-out ``tau`` steps."""
    if not panel:
        raise ValueError("empty dataset")
    t0 = time.perf_counter()
    tau = plan.tau
    grid = list(grid) if grid else [{}]
    tuning = None
    if len(grid) > 1:
        _check_lengths(panel, 2 * tau + 1, "tuning plus evaluation")
        train_region = [s.truncate(len(s) - tau) for s in panel]
        tuning = tune(factory, grid, train_region, plan, num_samples, seed, threads)
        params = tuning.best
    else:
        params = dict(grid[0])
    model = factory(params)
    fc = evaluate_windows(model, panel, plan, num_samples, seed, threads)
    loss, normalized = fc.mean_loss()
    cov = fc.coverage()
    return BacktestReport(
        model=model_name or getattr(model, "name", type(model).__name__),
        dataset=dataset_name,
        levels=plan.levels,
        mean_quantile_loss=loss,
        normalized=normalized,
        per_series=fc.per_series_loss(),
        coverage=cov,
        calibration_error=calibration_errors(cov),
        wall_clock=time.perf_counter() - t0,
        params=params,
        tuning=tuning,
        forecasts=fc,
    )


# ----------------------------------------------------------------- output


def fmt(x: float) -> str:
    """Six significant digits, the precision of every emitted number."""
    return f"{x:.6g}"


def _level_label(a: float) -> str:
    return f"{a:.2f}"


def write_metrics_csv(reports: Sequence[BacktestReport], path) -> None:
    levels = reports[0].levels
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["model", "dataset", "mean_quantile_loss"] + [f"coverage_{_level_label(a)}" for a in levels]
        )
        for r in reports:
            writer.writerow(
                [r.model, r.dataset, fmt(r.mean_quantile_loss)] + [fmt(r.coverage[a]) for a in levels]
            )


def write_calibration_csv(report: BacktestReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level", "coverage", "abs_error"])
        for a in report.levels:
            writer.writerow([_level_label(a), fmt(report.coverage[a]), fmt(report.calibration_error[a])])


def write_per_series_csv(reports: Sequence[BacktestReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "series_id", "mean_quantile_loss"])
        for r in reports:
            for sid in sorted(r.per_series):
                writer.writerow([r.model, sid, fmt(r.per_series[sid])])


def write_tuning_csv(model: str, result: TuneResult, path) -> None:
    keys = sorted({k for c in result.scores for k in c.params})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "candidate"] + keys + ["mean_quantile_loss", "selected", "error"])
        for i, c in enumerate(result.scores):
            writer.writerow(
                [model, i]
                + [_param_str(c.params.get(k, "")) for k in keys]
                + ["" if c.score is None else fmt(c.score), int(i == result.best_index), c.error or ""]
            )


def _param_str(v) -> str:
    if isinstance(v, float):
        return fmt(v)
    return str(getattr(v, "value", v))
