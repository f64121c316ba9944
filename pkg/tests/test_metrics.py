import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nptsforecast.forecaster import QUANTILE_LEVELS
from nptsforecast.metrics import (
    calibration_errors,
    coverage,
    coverage_table,
    mean_quantile_loss,
    quantile_loss,
)

LEVELS = QUANTILE_LEVELS


def test_levels_grid():
    assert len(LEVELS) == 19
    assert LEVELS[0] == pytest.approx(0.05) and LEVELS[-1] == pytest.approx(0.95)
    assert sum(LEVELS) == pytest.approx(9.5)


def test_quantile_loss_examples():
    assert quantile_loss(3.0, 3.0, 0.3) == 0.0
    assert quantile_loss(1.0, 2.0, 0.9) == pytest.approx(0.9)
    assert quantile_loss(2.0, 1.0, 0.9) == pytest.approx(0.1)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            quantile_loss(1.0, 2.0, bad)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0.001, 0.999))
def test_quantile_loss_nonnegative(q, z, a):
    assert quantile_loss(q, z, a) >= 0.0


def test_mean_quantile_loss_examples():
    z = np.array([[10.0]])
    assert mean_quantile_loss(np.full((19, 1, 1), 10.0), z, LEVELS) == 0.0
    assert mean_quantile_loss(np.full((19, 1, 1), 8.0), z, LEVELS) == pytest.approx(0.1, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_mean_quantile_loss_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    z = rng.normal(5.0, 2.0, size=(3, 4))
    q = np.sort(rng.normal(5.0, 2.0, size=(19, 3, 4)), axis=0)
    assert mean_quantile_loss(c * q, c * z, LEVELS) == pytest.approx(mean_quantile_loss(q, z, LEVELS), rel=1e-9)


def test_all_zero_actuals_flagged(caplog):
    q = np.ones((19, 2, 3))
    with caplog.at_level(logging.WARNING):
        value, normalized = mean_quantile_loss(q, np.zeros((2, 3)), LEVELS, return_flag=True)
    assert not normalized
    # every level overshoots by 1: loss (1 - alpha) averaged over the grid
    assert value == pytest.approx(0.5)
    assert "unnormalized" in caplog.text


def test_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        mean_quantile_loss(np.ones((18, 2)), np.ones(2), LEVELS)


def test_coverage_examples():
    z = np.array([1.0, 2.0, 3.0])
    assert coverage(np.full(3, 1e300), z) == 1.0
    assert coverage(np.full(3, 0.0), z) == 0.0
    # ties count as covered
    assert coverage(z.copy(), z) == 1.0
    with pytest.raises(ValueError):
        coverage(np.ones(2), z)


@pytest.mark.parametrize("alpha", [0.05, 0.3, 0.5, 0.9])
def test_coverage_uniform_actuals(alpha):
    # binomial std at n = 1e5 is at most 0.0016, so +-0.01 is > 6 sigma
    z = np.random.default_rng(42).random(100_000)
    assert coverage(np.full(z.size, alpha), z) == pytest.approx(alpha, abs=0.01)


def test_coverage_monotone_for_sorted_curves():
    rng = np.random.default_rng(0)
    z = rng.normal(size=500)
    q = np.sort(rng.normal(size=(19, 500)), axis=0)
    cov = coverage_table(q, z, LEVELS)
    vals = [cov[a] for a in LEVELS]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    errs = calibration_errors(cov)
    assert all(errs[a] == pytest.approx(abs(cov[a] - a)) for a in LEVELS)


def test_exact_quantiles_beat_point_forecast_on_iid_data():
    rng = np.random.default_rng(3)
    z = rng.normal(10.0, 1.0, size=20_000)
    from statistics import NormalDist

    exact = np.array([[NormalDist(10.0, 1.0).inv_cdf(a)] * z.size for a in LEVELS])
    point = np.full((19, z.size), 10.0)
    assert mean_quantile_loss(exact, z, LEVELS) < mean_quantile_loss(point, z, LEVELS) - 1e-3
