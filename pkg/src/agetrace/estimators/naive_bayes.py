"""Naive Bayes age classes over defect residuals with three density estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ..errors import InvalidArgument, InvalidModel

VARIANTS = ("NE", "HE", "KDE")
SIGMA_EPS = 1e-3
HIST_BINS = 64
KDE_MIN_BANDWIDTH = 0.5
MODEL_KIND = "naive-bayes"
MODEL_VERSION = 1

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class GaussianDensity:
    mean: float
    sigma: float

    @classmethod
    def fit(cls, x: np.ndarray) -> "GaussianDensity":
        return cls(float(np.mean(x)), max(float(np.std(x)), SIGMA_EPS))

    def logpdf(self, x) -> np.ndarray:
        z = (np.asarray(x, dtype=float) - self.mean) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI

    def as_dict(self) -> dict:
        return {"mean": self.mean, "sigma": self.sigma}


@dataclass(frozen=True)
class HistogramDensity:
    """Piecewise-constant density; values beyond the edges fall in the outer bins."""

    edges: tuple
    probs: tuple

    @classmethod
    def fit(cls, x: np.ndarray, lo: float, hi: float, bins: int = HIST_BINS) -> "HistogramDensity":
        edges = np.linspace(lo, hi, bins + 1)
        counts, _ = np.histogram(np.clip(x, lo, hi), bins=edges)
        probs = (counts + 1.0) / (counts.sum() + bins)
        return cls(tuple(edges.tolist()), tuple(probs.tolist()))

    def logpdf(self, x) -> np.ndarray:
        edges = np.asarray(self.edges)
        probs = np.asarray(self.probs)
        idx = np.clip(np.searchsorted(edges, np.asarray(x, dtype=float), side="right") - 1, 0, len(probs) - 1)
        return np.log(probs[idx] / np.diff(edges)[idx])

    def as_dict(self) -> dict:
        return {"edges": list(self.edges), "probs": list(self.probs)}


@dataclass(frozen=True)
class KernelDensity:
    points: tuple
    bandwidth: float

    @classmethod
    def fit(cls, x: np.ndarray) -> "KernelDensity":
        n = len(x)
        spread = float(np.std(x, ddof=1)) if n > 1 else 0.0
        q75, q25 = np.percentile(x, [75, 25])
        iqr = (q75 - q25) / 1.34
        if iqr > 0:
            spread = min(spread, iqr)
        bw = max(0.9 * spread * n ** -0.2, KDE_MIN_BANDWIDTH)
        return cls(tuple(np.asarray(x, dtype=float).tolist()), bw)

    def logpdf(self, x) -> np.ndarray:
        pts = np.asarray(self.points)
        z = (np.asarray(x, dtype=float)[..., None] - pts) / self.bandwidth
        return logsumexp(-0.5 * z * z, axis=-1) - math.log(len(pts) * self.bandwidth) - _LOG_SQRT_2PI

    def as_dict(self) -> dict:
        return {"points": list(self.points), "bandwidth": self.bandwidth}


_DENSITY = {"NE": GaussianDensity, "HE": HistogramDensity, "KDE": KernelDensity}


@dataclass
class NBModel:
    """``densities[k][i]`` is the density of feature ``i`` given class ``classes[k]``."""

    variant: str
    classes: list
    priors: np.ndarray
    densities: list

    @property
    def n_features(self) -> int:
        return len(self.densities[0])

    def as_dict(self) -> dict:
        return {
            "kind": MODEL_KIND,
            "version": MODEL_VERSION,
            "variant": self.variant,
            "classes": list(self.classes),
            "priors": [float(p) for p in self.priors],
            "densities": [[d.as_dict() for d in row] for row in self.densities],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NBModel":
        if d.get("kind") != MODEL_KIND or d.get("version") != MODEL_VERSION:
            raise InvalidModel("not a supported naive Bayes model")
        variant = d["variant"]
        if variant not in VARIANTS:
            raise InvalidModel(f"unknown variant {variant!r}")
        dens = _DENSITY[variant]
        rows = []
        for row in d["densities"]:
            parsed = []
            for x in row:
                x = {k: tuple(v) if isinstance(v, list) else v for k, v in x.items()}
                parsed.append(dens(**x))
            rows.append(parsed)
        return cls(variant, list(d["classes"]), np.asarray(d["priors"], dtype=float), rows)


def nb_train(variant: str, features, labels: Sequence) -> NBModel:
    """Fit per-class, per-feature densities; ``features`` is ``(n_samples, n_defects)``."""
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}, got {variant!r}")
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != len(y) or X.shape[1] == 0:
        raise InvalidArgument("features must be (n_samples, n_defects) aligned with labels")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("features must be finite")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise InvalidArgument("at least two classes are required")
    counts = np.array([np.sum(y == c) for c in classes])
    if counts.min() < 2:
        raise InvalidArgument("every class needs at least two samples")
    lo, hi = X.min(axis=0), X.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    rows = []
    for c in classes:
        Xc = X[y == c]
        if variant == "HE":
            rows.append([HistogramDensity.fit(Xc[:, i], lo[i], hi[i]) for i in range(X.shape[1])])
        else:
            rows.append([_DENSITY[variant].fit(Xc[:, i]) for i in range(X.shape[1])])
    return NBModel(variant, classes, counts / counts.sum(), rows)


def nb_log_posterior(model: NBModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,) or not np.all(np.isfinite(x)):
        raise InvalidArgument(f"query must hold {model.n_features} finite features")
    joint = np.log(model.priors) + np.array(
        [sum(float(d.logpdf(x[i])) for i, d in enumerate(row)) for row in model.densities])
    return joint - logsumexp(joint)


def nb_classify(model: NBModel, x):
    """Return ``(class, posterior)``; ties go to the smallest class."""
    post = np.exp(nb_log_posterior(model, x))
    return model.classes[int(np.argmax(post))], post
