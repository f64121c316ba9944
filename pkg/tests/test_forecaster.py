from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nptsforecast.forecaster import (
    ForecastError,
    empirical_quantile,
    forecast_paths,
    one_step_distribution,
    quantile_curves,
)
from nptsforecast.kernels import SamplingDistribution
from nptsforecast.models import NPTS, SeasonalNaive, make_model
from nptsforecast.timeseries import Frequency, TimeSeries

from oracles import brute_force_pmf, total_variation

H = Frequency.parse("H")


def series(values, sid="s"):
    return TimeSeries(sid, datetime(2015, 1, 1), H, values)


def uniform_source(windows, target_index):
    return np.full(windows.shape[1], 1.0 / windows.shape[1])


# ------------------------------------------------------ one-step pmf


def test_one_step_single_value():
    d = one_step_distribution([5.0], SamplingDistribution([1.0]))
    assert d.support.tolist() == [5.0] and d.pmf.tolist() == [1.0] and d.cdf.tolist() == [1.0]


def test_one_step_merges_ties():
    d = one_step_distribution([1, 2, 1], SamplingDistribution([0.2, 0.5, 0.3]))
    assert d.support.tolist() == [1.0, 2.0]
    np.testing.assert_allclose(d.pmf, [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(d.cdf, [0.5, 1.0], atol=1e-15)


def test_one_step_constant():
    d = one_step_distribution([3, 3, 3], SamplingDistribution([0.1, 0.7, 0.2]))
    assert d.support.tolist() == [3.0]
    assert d.pmf[0] == pytest.approx(1.0, abs=1e-15)


def test_one_step_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        one_step_distribution([1, 2], SamplingDistribution([1.0]))


@given(st.lists(st.integers(0, 6), min_size=1, max_size=30), st.integers(0, 2**31))
@settings(max_examples=100, deadline=None)
def test_one_step_matches_brute_force(values, seed):
    probs = np.random.default_rng(seed).dirichlet(np.ones(len(values)))
    d = one_step_distribution(values, SamplingDistribution(probs))
    ref = brute_force_pmf(values, probs)
    assert d.support.tolist() == sorted(ref)
    np.testing.assert_allclose(d.pmf, [ref[v] for v in sorted(ref)], atol=1e-12)
    assert abs(d.cdf[-1] - 1) <= 1e-9
    assert np.all(np.diff(d.cdf) >= 0)


# --------------------------------------------------------- quantiles


def test_empirical_quantile_examples():
    assert empirical_quantile([1, 2, 3, 4, 5], 0.5) == 3.0
    assert empirical_quantile([1, 2], 0.25) == 1.25
    assert empirical_quantile([7.5] * 9, 0.13) == 7.5
    for bad in (0.0, 1.0, -0.1, 1.2):
        with pytest.raises(ValueError):
            empirical_quantile([1, 2], bad)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(0.01, 0.99))
def test_empirical_quantile_matches_numpy_linear(samples, level):
    s = np.sort(samples)
    assert empirical_quantile(s, level) == pytest.approx(np.quantile(s, level), rel=1e-12, abs=1e-9)


# -------------------------------------------------------- sample paths


def test_constant_series_gives_constant_forecast():
    for model in (NPTS("uniform"), NPTS("exponential", 0.5), NPTS("seasonal-uniform"),
                  NPTS("seasonal-exponential", 0.25), SeasonalNaive()):
        res = model.predict(series([4.2] * 30), 12, num_samples=50, seed=1)
        assert np.all(res.samples == 4.2)
        for curve in res.quantiles.values():
            assert np.all(curve == 4.2)


def test_uniform_two_values_frequency():
    res = forecast_paths(series([1.0, 2.0]), uniform_source, 1, num_samples=100_000, seed=7)
    share = np.mean(res.samples[:, 0] == 1.0)
    assert share == pytest.approx(0.5, abs=0.01)
    # the median of a fair two-point draw sits on the jump, so only the tails are stable
    assert res.quantiles[0.25][0] == 1.0 and res.quantiles[0.75][0] == 2.0
    assert 1.0 <= res.quantiles[0.5][0] <= 2.0


def test_last_index_point_mass_is_naive():
    def last(windows, target_index):
        p = np.zeros(windows.shape[1])
        p[-1] = 1.0
        return p

    res = forecast_paths(series([3.0, 1.0, 9.0]), last, 2, num_samples=5, seed=0)
    assert np.all(res.samples == 9.0)


def test_seasonal_naive_repeats_last_season():
    vals = np.tile(np.arange(24, dtype=float), 3)
    res = SeasonalNaive().predict(series(vals), 30, num_samples=3)
    np.testing.assert_array_equal(res.samples[0], np.tile(np.arange(24.0), 2)[:30])


def test_paths_reuse_own_predictions():
    # exponential kernel with huge lambda always copies the previous value of the path
    res = NPTS("exponential", 500.0).predict(series([1.0, 2.0, 3.0, 4.0]), 6, num_samples=20, seed=3)
    assert np.all(res.samples == 4.0)


def test_context_window_slides_over_predictions():
    seen = []

    def spy(windows, target_index):
        seen.append((target_index, windows[0].copy()))
        p = np.zeros(windows.shape[1])
        p[0] = 1.0
        return p

    forecast_paths(series([1.0, 2.0, 3.0]), spy, 3, num_samples=1, context_length=2)
    assert [t for t, _ in seen] == [3, 4, 5]
    np.testing.assert_array_equal(seen[0][1], [2.0, 3.0])
    np.testing.assert_array_equal(seen[1][1], [3.0, 2.0])
    np.testing.assert_array_equal(seen[2][1], [2.0, 3.0])


@given(
    values=st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=40),
    name=st.sampled_from(["npts-uniform", "npts-exp", "seasonal-npts-uniform", "seasonal-npts-exp", "seasonal-naive"]),
    seed=st.integers(0, 1000),
)
@settings(max_examples=60, deadline=None)
def test_closure(values, name, seed):
    model = make_model(name, lam=0.3)
    res = model.predict(series(values), 10, num_samples=30, seed=seed)
    assert res.samples.min() >= min(values) and res.samples.max() <= max(values)
    for curve in res.quantiles.values():
        assert curve.min() >= min(values) and curve.max() <= max(values)
    seen = set(values)
    assert set(np.unique(res.samples)).issubset(seen)


def test_quantile_curves_monotone_in_level():
    rng = np.random.default_rng(0)
    res = NPTS("uniform").predict(series(rng.normal(size=200)), 8, num_samples=37, seed=2)
    levels = sorted(res.quantiles)
    for lo, hi in zip(levels, levels[1:]):
        assert np.all(res.quantiles[lo] <= res.quantiles[hi])


def test_reproducible():
    s = series(np.random.default_rng(5).normal(size=100))
    a = NPTS("exponential", 0.1).predict(s, 24, seed=11)
    b = NPTS("exponential", 0.1).predict(s, 24, seed=11)
    assert a.samples.tobytes() == b.samples.tobytes()
    c = NPTS("exponential", 0.1).predict(s, 24, seed=12)
    assert a.samples.tobytes() != c.samples.tobytes()


def test_pmf_matches_exact_distribution():
    rng = np.random.default_rng(9)
    values = rng.integers(0, 5, size=15).astype(float)
    probs = rng.dirichlet(np.ones(15))
    res = forecast_paths(series(values), lambda w, t: probs, 1, num_samples=100_000, seed=4)
    emp = {float(v): c / 100_000 for v, c in zip(*np.unique(res.samples, return_counts=True))}
    exact = one_step_distribution(values, SamplingDistribution(probs))
    assert total_variation(emp, dict(zip(exact.support.tolist(), exact.pmf.tolist()))) < 0.01


def test_provider_errors_carry_context():
    def broken(windows, target_index):
        if target_index == 12:
            raise RuntimeError("boom")
        return uniform_source(windows, target_index)

    with pytest.raises(ForecastError, match="step 3/5"):
        forecast_paths(series(np.arange(10.0)), broken, 5, num_samples=2)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        forecast_paths(series([1.0]), uniform_source, 0)
    with pytest.raises(ValueError):
        forecast_paths(series([1.0]), uniform_source, 1, num_samples=0)
    with pytest.raises(ValueError):
        quantile_curves(np.zeros((3, 2)), [1.0])
