"""Metrics and goodness-of-fit tests used across the toolkit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument

KS_ASYMPTOTIC_MIN_N = 35


@dataclass
class MetricReport:
    name: str
    value: float
    auxiliary: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "auxiliary": self.auxiliary}


def mae(predicted: Sequence[float], true: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(true, dtype=float)
    if p.shape != t.shape or p.size == 0:
        raise InvalidArgument(f"mae needs equal non-empty lengths, got {p.size} and {t.size}")
    return float(np.mean(np.abs(p - t)))


def relative_estimation_error(mae_value: float, onset_times: Sequence[float]) -> float:
    """MAE divided by the mean gap between successive defect onsets."""
    onsets = np.sort(np.asarray(onset_times, dtype=float))
    if onsets.size < 2:
        raise InvalidArgument("relative estimation error needs at least two onsets")
    gap = float(np.mean(np.diff(onsets)))
    if gap <= 0:
        raise InvalidArgument("onsets coincide; mean gap is zero")
    return mae_value / gap


@dataclass
class ClassificationReport:
    accuracy: float
    f1: dict
    absent: list

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": {str(k): v for k, v in self.f1.items()},
            "absent_classes": [str(k) for k in self.absent],
        }


def classification_report(pred, true, labels: Optional[Sequence] = None) -> ClassificationReport:
    """Accuracy and per-class F1.

    Classes listed in ``labels`` that occur in neither ``pred`` nor ``true``
    get F1 = 0 and are listed in ``absent``.
    """
    pred = list(pred)
    true = list(true)
    if len(pred) != len(true):
        raise InvalidArgument(f"length mismatch: {len(pred)} predictions, {len(true)} labels")
    if not true:
        raise InvalidArgument("empty prediction set")
    classes = sorted(set(true) | set(pred) | set(labels or []))
    accuracy = sum(p == t for p, t in zip(pred, true)) / len(true)
    f1, absent = {}, []
    for c in classes:
        tp = sum(p == c and t == c for p, t in zip(pred, true))
        fp = sum(p == c and t != c for p, t in zip(pred, true))
        fn = sum(p != c and t == c for p, t in zip(pred, true))
        if tp + fp + fn == 0:
            f1[c] = 0.0
            absent.append(c)
        else:
            f1[c] = 2 * tp / (2 * tp + fp + fn)
    return ClassificationReport(accuracy, f1, absent)


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) by its power series; converges fast for x < a + 1
    term = total = 1.0 / a
    ap = a
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_continued_fraction(a: float, x: float) -> float:
    # Q(a, x) by the modified Lentz continued fraction; for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x)."""
    if a <= 0:
        raise InvalidArgument("a must be positive")
    if x < 0:
        raise InvalidArgument("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_continued_fraction(a, x))


def chi2_sf(statistic: float, dof: int) -> float:
    return regularized_gamma_q(dof / 2.0, statistic / 2.0)


def chi_square_gof(observed, expected) -> tuple[float, float]:
    """Pearson chi-square statistic and upper-tail p-value with ``bins - 1`` dof."""
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if obs.shape != exp.shape or obs.ndim != 1:
        raise InvalidArgument("observed and expected must be equal-length vectors")
    if obs.size < 2:
        raise InvalidArgument("chi-square test needs at least two bins")
    if np.any(exp <= 0):
        raise InvalidArgument("every expected count must be positive")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, chi2_sf(stat, obs.size - 1)


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the limiting Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # Jacobi-transformed series for the CDF converges fast for small lam
        s = sum(
            math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * lam * lam)) for k in range(1, 20)
        )
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def ks_statistic(samples, cdf) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_pvalue(statistic: float, n: int, mc_draws: int = 20000, mc_seed: int = 0) -> tuple[float, str]:
    """p-value of a one-sample KS statistic and the calibration used.

    Asymptotic Kolmogorov law with the Stephens finite-n correction for
    ``n >= 35``; Monte-Carlo calibration against uniform samples otherwise.
    """
    if n >= KS_ASYMPTOTIC_MIN_N:
        sn = math.sqrt(n)
        return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * statistic), "asymptotic"
    rng = np.random.default_rng(mc_seed)
    u = np.sort(rng.random((mc_draws, n)), axis=1)
    i = np.arange(1, n + 1)
    d = np.maximum(np.max(i / n - u, axis=1), np.max(u - (i - 1) / n, axis=1))
    return float((np.sum(d >= statistic) + 1) / (mc_draws + 1)), "monte-carlo"


def exponential_interarrival_test(arrival_times, rate: float) -> tuple[float, float]:
    """KS test of successive arrival gaps against Exp(rate)."""
    t = np.asarray(arrival_times, dtype=float)
    if t.size < 10:
        raise InvalidArgument("need at least 10 arrivals")
    if np.any(np.diff(t) < 0):
        raise InvalidArgument("arrival times must be sorted")
    if rate <= 0:
        raise InvalidArgument("rate must be positive")
    gaps = np.diff(np.concatenate([[0.0], t]))
    stat = ks_statistic(gaps, lambda g: 1.0 - np.exp(-rate * g))
    p, _ = ks_pvalue(stat, gaps.size)
    return stat, p


def growth_regression(times, counts) -> tuple[float, float, float]:
    """Ordinary least squares line through (time, cumulative count): slope, intercept, r^2."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(counts, dtype=float)
    if t.shape != y.shape or t.size < 3:
        raise InvalidArgument("growth regression needs at least 3 paired points")
    tc = t - t.mean()
    sxx = float(np.sum(tc * tc))
    if sxx == 0:
        raise InvalidArgument("time vector is constant")
    slope = float(np.sum(tc * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * t.mean())
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * t + intercept)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2
