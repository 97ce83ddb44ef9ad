"""PRNU estimates per time cluster, correlation-based ordering and single-image placement."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import InvalidArgument
from ..imaging import RasterImage, median_array

MAX_EXHAUSTIVE = 8
MIN_ILLUMINATION = 1.0
TIE_TOL = 1e-12


@dataclass(frozen=True)
class PRNUField:
    field: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        f = np.asarray(self.field, dtype=float)
        if f.ndim != 2 or not np.all(np.isfinite(f)):
            raise InvalidArgument("a PRNU field must be a finite 2-D array")
        object.__setattr__(self, "field", f)


def _single_estimate(img) -> np.ndarray:
    a = img.data if isinstance(img, RasterImage) else np.asarray(img)
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    med = median_array(a, 3)
    if med.mean() < MIN_ILLUMINATION:
        raise InvalidArgument("zero illumination cannot carry PRNU (dark frame in cluster)")
    return ((a - med) / np.maximum(med, MIN_ILLUMINATION)).mean(axis=2)


def prnu_estimate(images: Sequence, label: Optional[str] = None) -> PRNUField:
    """Mean over images of the median residual divided by the median-filtered intensity."""
    if not images:
        raise InvalidArgument("a cluster needs at least one image")
    ests = [_single_estimate(x) for x in images]
    if any(e.shape != ests[0].shape for e in ests):
        raise InvalidArgument("cluster images must share dimensions")
    return PRNUField(np.mean(ests, axis=0), label)


def _fields(fields) -> list[np.ndarray]:
    arrs = [f.field if isinstance(f, PRNUField) else np.asarray(f, dtype=float) for f in fields]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise InvalidArgument("fields must share dimensions")
    for a in arrs:
        if np.std(a) == 0:
            raise InvalidArgument("a constant field has no correlation structure")
    return arrs


def correlation_matrix(fields) -> np.ndarray:
    arrs = _fields(fields)
    c = np.corrcoef(np.stack([a.ravel() for a in arrs]))
    c = (c + c.T) / 2
    np.fill_diagonal(c, 1.0)
    return c


@dataclass
class OrderResult:
    order: list
    correlation: np.ndarray
    score: float
    tied: bool
    tied_orders: list

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "correlation": self.correlation.tolist(),
            "score": self.score,
            "tied": self.tied,
            "tied_orders": self.tied_orders,
        }


def mi_order(fields) -> OrderResult:
    """Ordering that maximizes the summed correlation of neighbors, up to reversal.

    Every path is enumerated once (first element below the last); the
    lexicographically smallest best path is returned and equal-scoring
    alternatives are reported.
    """
    n = len(fields)
    if n < 3:
        raise InvalidArgument("ordering needs at least three fields")
    if n > MAX_EXHAUSTIVE:
        raise InvalidArgument(f"exhaustive ordering is limited to {MAX_EXHAUSTIVE} fields, got {n}")
    c = correlation_matrix(fields)
    scored = []
    for p in itertools.permutations(range(n)):
        if p[0] < p[-1]:
            scored.append((sum(c[p[i], p[i + 1]] for i in range(n - 1)), p))
    best = max(s for s, _ in scored)
    tol = TIE_TOL * max(1.0, abs(best))
    winners = [list(p) for s, p in scored if best - s <= tol]
    return OrderResult(winners[0], c, float(best), len(winners) > 1, winners)


def iip_place(query, fields) -> int:
    """Index of the field best correlated with the query's single-image estimate; ties go earlier."""
    if not fields:
        raise InvalidArgument("at least one ordered field is required")
    q = query.field if isinstance(query, PRNUField) else _single_estimate(query)
    if np.std(q) == 0:
        raise InvalidArgument("query residual has zero variance")
    arrs = _fields(fields)
    if arrs[0].shape != q.shape:
        raise InvalidArgument(f"query shape {q.shape} does not match fields {arrs[0].shape}")
    corr = np.array([np.corrcoef(q.ravel(), a.ravel())[0, 1] for a in arrs])
    best = corr.max()
    return int(np.flatnonzero(corr >= best - TIE_TOL)[0])
