import csv
from datetime import datetime

import numpy as np
import pytest

from nptsforecast import synth
from nptsforecast.evaluation import (
    BacktestPlan,
    evaluate_windows,
    fmt,
    rolling_backtest,
    tune,
    write_calibration_csv,
    write_metrics_csv,
    write_per_series_csv,
    write_tuning_csv,
)
from nptsforecast.kernels import LAMBDA_GRID
from nptsforecast.models import NPTS, Forecaster, SeasonalNaive, make_model
from nptsforecast.timeseries import Frequency, TimeSeries

H = Frequency.parse("H")


def factory(name, **fixed):
    return lambda params: make_model(name, **{**fixed, **params})


def test_plan():
    plan = BacktestPlan(24, 7)
    assert plan.tau == 168 and len(plan.levels) == 19
    with pytest.raises(ValueError):
        BacktestPlan(0)


def test_single_window_is_plain_split():
    panel = synth.random_walk(3, 60, seed=1)
    plan = BacktestPlan(10, 1)
    fc = evaluate_windows(NPTS("uniform"), panel, plan, num_samples=20, threads=1)
    assert fc.quantiles.shape == (19, 3, 10)
    np.testing.assert_array_equal(fc.actuals, np.stack([s.values[50:] for s in panel]))
    assert fc.start_indices == [50, 50, 50]


def test_windows_reveal_actuals():
    # the naive kernel repeats the last revealed value throughout each window
    s = TimeSeries("a", datetime(2015, 1, 1), H, np.arange(30, dtype=float))
    fc = evaluate_windows(NPTS("exponential", 1e4), [s], BacktestPlan(5, 2), num_samples=3, threads=1)
    np.testing.assert_array_equal(fc.quantiles[9, 0], [19.0] * 5 + [24.0] * 5)


def test_seasonal_naive_perfect_on_noiseless_periodic_data():
    panel = synth.sinusoid(4, 24 * 10, noise=0.0, seed=2)
    report = rolling_backtest(panel, lambda p: SeasonalNaive(), BacktestPlan(24, 3), num_samples=10, threads=1)
    assert report.mean_quantile_loss == pytest.approx(0.0, abs=1e-12)
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in report.per_series.values())


def test_exponential_beats_uniform_on_random_walk():
    panel = synth.random_walk(20, 200, seed=11)
    plan = BacktestPlan(10, 3)
    uni = rolling_backtest(panel, factory("npts-uniform"), plan, num_samples=100, seed=5, threads=1)
    exp = rolling_backtest(panel, factory("npts-exp", lam=1.0), plan, num_samples=100, seed=5, threads=1)
    assert exp.mean_quantile_loss < uni.mean_quantile_loss


def test_tune_grid_of_one():
    panel = synth.random_walk(2, 50, seed=0)
    res = tune(factory("npts-exp"), [{"lam": 0.5}], panel, BacktestPlan(5), num_samples=10, threads=1)
    assert res.best == {"lam": 0.5} and res.best_index == 0


def test_tune_identical_candidates_first_wins():
    panel = synth.random_walk(2, 50, seed=0)
    grid = [{"lam": 0.5}, {"lam": 0.5}]
    res = tune(factory("npts-exp"), grid, panel, BacktestPlan(5), num_samples=10, threads=1)
    assert res.scores[0].score == res.scores[1].score
    assert res.best_index == 0


def test_tune_lambda_grid_returns_argmin():
    panel = synth.random_walk(5, 80, seed=4)
    grid = [{"lam": lam} for lam in LAMBDA_GRID]
    res = tune(factory("npts-exp"), grid, panel, BacktestPlan(5, 2), num_samples=50, threads=1)
    scores = [c.score for c in res.scores]
    assert res.best_index == int(np.argmin(scores))
    assert res.best == grid[res.best_index]


class Broken(Forecaster):
    def fit(self, panel):
        raise RuntimeError("cannot fit")


def test_tune_skips_failing_candidates():
    panel = synth.random_walk(2, 50, seed=0)

    def fac(params):
        return Broken() if params["bad"] else NPTS("uniform")

    res = tune(fac, [{"bad": True}, {"bad": False}], panel, BacktestPlan(5), num_samples=10, threads=1)
    assert res.best == {"bad": False}
    assert res.scores[0].score is None and "cannot fit" in res.scores[0].error
    with pytest.raises(RuntimeError, match="every candidate"):
        tune(fac, [{"bad": True}], panel, BacktestPlan(5), threads=1)
    with pytest.raises(ValueError):
        tune(fac, [], panel, BacktestPlan(5))


def test_backtest_tunes_then_retrains():
    panel = synth.random_walk(4, 100, seed=3)
    grid = [{"lam": lam} for lam in LAMBDA_GRID]
    report = rolling_backtest(panel, factory("npts-exp"), BacktestPlan(5, 2), grid, num_samples=30, threads=1)
    assert report.tuning is not None and report.params == report.tuning.best
    assert len(report.tuning.scores) == 5


def test_insufficient_length_names_series():
    panel = [TimeSeries("tiny", datetime(2015, 1, 1), H, np.ones(5))]
    with pytest.raises(ValueError, match="tiny"):
        rolling_backtest(panel, factory("npts-uniform"), BacktestPlan(5))
    panel = [TimeSeries("mid", datetime(2015, 1, 1), H, np.ones(15))]
    with pytest.raises(ValueError, match="mid"):
        rolling_backtest(panel, factory("npts-exp"), BacktestPlan(5, 2), [{"lam": 1.0}, {"lam": 0.5}])


def test_coverage_bounded_and_monotone():
    panel = synth.iid(10, 120, seed=0)
    report = rolling_backtest(panel, factory("npts-uniform"), BacktestPlan(10, 2), num_samples=100, threads=1)
    vals = [report.coverage[a] for a in report.levels]
    assert all(0 <= v <= 1 for v in vals)
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_aggregate_pools_points():
    panel = synth.random_walk(3, 60, seed=8)
    report = rolling_backtest(panel, factory("npts-uniform"), BacktestPlan(5, 2), num_samples=20, threads=1)
    fc = report.forecasts
    a = np.asarray(fc.levels)[:, None, None]
    loss = (a - (fc.actuals[None] < fc.quantiles)) * (fc.actuals[None] - fc.quantiles)
    assert report.mean_quantile_loss == pytest.approx(loss.sum() / (np.abs(fc.actuals).sum() * 19), rel=1e-12)


def test_calibration_of_climatological_forecaster():
    panel = synth.iid(200, 600, seed=17)
    report = rolling_backtest(panel, factory("npts-uniform"), BacktestPlan(50, 10), num_samples=100, seed=1)
    assert report.forecasts.actuals.shape == (200, 500)
    assert report.max_calibration_error <= 0.02


def test_backtest_deterministic_across_threads(tmp_path):
    panel = synth.random_walk(6, 80, seed=2)
    grid = [{"lam": lam} for lam in LAMBDA_GRID]
    a = rolling_backtest(panel, factory("npts-exp"), BacktestPlan(5, 2), grid, num_samples=30, seed=9, threads=1)
    b = rolling_backtest(panel, factory("npts-exp"), BacktestPlan(5, 2), grid, num_samples=30, seed=9, threads=4)
    assert a.forecasts.quantiles.tobytes() == b.forecasts.quantiles.tobytes()
    paths = []
    for r, tag in ((a, "a"), (b, "b")):
        out = tmp_path / tag
        out.mkdir()
        write_metrics_csv([r], out / "metrics.csv")
        write_calibration_csv(r, out / "calibration.csv")
        write_per_series_csv([r], out / "per_series.csv")
        write_tuning_csv("npts-exp", r.tuning, out / "tuning.csv")
        paths.append(out)
    for name in ("metrics.csv", "calibration.csv", "per_series.csv", "tuning.csv"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()


def test_csv_layout(tmp_path):
    panel = synth.random_walk(2, 60, seed=0)
    grid = [{"lam": 1.0}, {"lam": 1.0}]
    r = rolling_backtest(panel, factory("npts-exp"), BacktestPlan(5), grid, model_name="npts-exp",
                         dataset_name="rw", num_samples=10, threads=1)
    write_metrics_csv([r], tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0][:3] == ["model", "dataset", "mean_quantile_loss"]
    assert rows[0][3] == "coverage_0.05" and len(rows[0]) == 22
    assert rows[1][:2] == ["npts-exp", "rw"]
    write_calibration_csv(r, tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["level", "coverage", "abs_error"] and len(rows) == 20
    write_tuning_csv("npts-exp", r.tuning, tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [row["selected"] for row in rows] == ["1", "0"]


def test_fmt_six_significant_digits():
    assert fmt(0.123456789) == "0.123457"
    assert fmt(1234567.0) == "1.23457e+06"
    assert fmt(0.0) == "0"
