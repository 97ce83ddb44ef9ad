import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special
from scipy import stats as sps

from agetrace.errors import InvalidArgument
from agetrace.stats import (
    MetricReport,
    chi2_sf,
    chi_square_gof,
    classification_report,
    exponential_interarrival_test,
    growth_regression,
    kolmogorov_sf,
    ks_pvalue,
    ks_statistic,
    mae,
    regularized_gamma_q,
    relative_estimation_error,
)


def test_mae_examples():
    assert mae([1, 2, 3], [1, 2, 3]) == 0
    assert mae([1, 3], [2, 5]) == 1.5
    with pytest.raises(InvalidArgument):
        mae([1], [1, 2])
    with pytest.raises(InvalidArgument):
        mae([], [])


@given(st.lists(st.integers(-100, 100), min_size=1, max_size=20), st.integers(-50, 50))
def test_mae_shift_invariant(v, shift):
    p = np.array(v)
    t = p[::-1]
    assert mae(p + shift, t + shift) == pytest.approx(mae(p, t))


def test_relative_error_examples():
    onsets = [0.0, 45.01, 90.02]
    assert relative_estimation_error(76.97, onsets) == pytest.approx(1.71, abs=5e-3)
    assert relative_estimation_error(0.0, onsets) == 0
    assert relative_estimation_error(10, [0, 8, 20]) == pytest.approx(2 * relative_estimation_error(10, [0, 16, 40]))
    with pytest.raises(InvalidArgument):
        relative_estimation_error(1.0, [5.0])


def test_classification_report_examples():
    r = classification_report([0, 1, 2], [0, 1, 2])
    assert r.accuracy == 1 and all(v == 1 for v in r.f1.values())
    true = [c for c in range(5) for _ in range(4)]
    assert classification_report([0] * 20, true).accuracy == pytest.approx(0.2)
    pred = [1] * 8 + [0] * 2 + [1] * 2 + [0] * 8
    true = [1] * 8 + [1] * 2 + [0] * 2 + [0] * 8
    assert classification_report(pred, true).f1[1] == pytest.approx(0.8)
    r = classification_report([0, 1], [0, 1], labels=[0, 1, 7])
    assert r.f1[7] == 0 and r.absent == [7]
    assert r.as_dict()["absent_classes"] == ["7"]
    with pytest.raises(InvalidArgument):
        classification_report([0], [0, 1])


@pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 7.0, 30.0, 150.0])
@pytest.mark.parametrize("x", [1e-4, 0.3, 1.0, 4.0, 12.0, 60.0, 200.0])
def test_regularized_gamma_matches_reference(a, x):
    assert regularized_gamma_q(a, x) == pytest.approx(special.gammaincc(a, x), abs=1e-10, rel=1e-8)


def test_chi_square_examples():
    assert chi_square_gof([5, 5, 5], [5, 5, 5]) == (0.0, 1.0)
    assert chi2_sf(3.841, 1) == pytest.approx(0.05, abs=1e-4)
    with pytest.raises(InvalidArgument):
        chi_square_gof([1, 2], [1, 0])
    with pytest.raises(InvalidArgument):
        chi_square_gof([1], [1])


@given(st.lists(st.integers(0, 50), min_size=2, max_size=12))
def test_chi_square_p_matches_reference(obs):
    exp = np.full(len(obs), max(np.mean(obs), 1.0))
    stat, p = chi_square_gof(obs, exp)
    assert 0 <= p <= 1
    assert p == pytest.approx(special.gammaincc((len(obs) - 1) / 2, stat / 2), abs=1e-8)


@given(st.integers(0, 4), st.integers(1, 30))
def test_chi_square_monotone_in_one_bin(i, step):
    exp = np.full(5, 10.0)
    base = exp.copy()
    more = exp.copy()
    base[i] += step
    more[i] += step + 1
    assert chi_square_gof(more, exp)[0] > chi_square_gof(base, exp)[0]


@pytest.mark.parametrize("lam", [0.2, 0.5, 0.8, 1.0, 1.17, 1.19, 1.5, 2.0, 3.0])
def test_kolmogorov_sf_matches_reference(lam):
    assert kolmogorov_sf(lam) == pytest.approx(sps.kstwobign.sf(lam), abs=1e-10)


def test_ks_pvalue_calibrations():
    x = np.random.default_rng(0).random(200)
    d = ks_statistic(x, lambda v: v)
    p, how = ks_pvalue(d, 200)
    assert how == "asymptotic"
    assert p == pytest.approx(sps.kstest(x, "uniform").pvalue, abs=0.01)
    small = x[:20]
    d = ks_statistic(small, lambda v: v)
    p, how = ks_pvalue(d, 20)
    assert how == "monte-carlo"
    assert p == pytest.approx(sps.kstest(small, "uniform", method="exact").pvalue, abs=0.02)


def test_interarrival_exponential_passes_and_constant_fails():
    passes = 0
    for seed in range(100):
        t = np.cumsum(np.random.default_rng(seed).exponential(1 / 3.0, 1000))
        _, p = exponential_interarrival_test(t, 3.0)
        assert 0 <= p <= 1
        passes += p > 0.01
    assert passes >= 95
    _, p = exponential_interarrival_test(np.arange(1, 1001) / 3.0, 3.0)
    assert p < 0.001


def test_interarrival_errors():
    with pytest.raises(InvalidArgument):
        exponential_interarrival_test(np.arange(5.0), 1.0)
    with pytest.raises(InvalidArgument):
        exponential_interarrival_test(np.arange(20.0)[::-1], 1.0)


def test_growth_regression_exact_line_and_shift():
    t = np.arange(10.0)
    s, i, r2 = growth_regression(t, 2 * t + 1)
    assert (s, i, r2) == pytest.approx((2, 1, 1))
    assert growth_regression(t + 100, 2 * t + 1)[0] == pytest.approx(2)
    with pytest.raises(InvalidArgument):
        growth_regression([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidArgument):
        growth_regression([1, 2], [1, 2])


def test_growth_regression_poisson_counts():
    slopes = []
    days = np.arange(1, 101)
    for seed in range(50):
        counts = np.cumsum(np.random.default_rng(seed).poisson(5, days.size))
        slopes.append(growth_regression(days, counts)[0])
    assert abs(np.mean(slopes) - 5) < 0.5


def test_metric_report_dict():
    assert MetricReport("mae", 1.5, {"n": 3}).as_dict() == {"name": "mae", "value": 1.5, "auxiliary": {"n": 3}}
    assert math.isfinite(MetricReport("x", 0.0).value)
