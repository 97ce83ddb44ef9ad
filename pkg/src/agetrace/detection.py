"""Defect localization and onset/parameter estimation from calibration and scene images."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InvalidArgument
from .imaging import AcquisitionMeta, PixelCoord, RasterImage, cfa_channel, median_array
from .stats import chi2_sf, chi_square_gof

DFI_THRESHOLD = 14.0
SIGMA_FLOOR = 0.5


def detect_defects_dfi(
    dfis: Sequence[RasterImage],
    threshold: float = DFI_THRESHOLD,
    metas: Optional[Sequence[AcquisitionMeta]] = None,
    cfa: bool = True,
) -> list[PixelCoord]:
    """Sites whose mean dark-field value exceeds ``threshold``, in raster order.

    For single-channel (raw Bayer) dark fields the returned channel is the
    site's RGGB color plane when ``cfa`` is set, so the coordinate indexes
    the matching plane of demosaiced images.
    """
    if not dfis:
        raise InvalidArgument("no dark-field images given")
    shape = dfis[0].data.shape
    if any(d.data.shape != shape for d in dfis):
        raise InvalidArgument("dark-field images differ in dimensions")
    if metas is not None and any(m.kind != "dark-field" for m in metas):
        raise InvalidArgument("detection expects dark-field images only")
    mean = np.mean([d.data.astype(float) for d in dfis], axis=0)
    rows, cols, chans = np.nonzero(mean > threshold)
    out = []
    for r, c, ch in zip(rows.tolist(), cols.tolist(), chans.tolist()):
        if shape[2] == 1 and cfa:
            ch = cfa_channel(r, c)
        out.append(PixelCoord(r, c, ch))
    return out


@dataclass
class ResidualSeries:
    """Residuals of one site over chronologically ordered images.

    ``illumination`` is the median-filtered value at the site (the proxy for
    incident light); ``tau`` is the per-image dark-current factor.
    """

    coord: PixelCoord
    values: np.ndarray
    illumination: np.ndarray
    tau: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.size
        self.illumination = np.asarray(self.illumination, dtype=float)
        self.tau = np.broadcast_to(np.asarray(self.tau, dtype=float), (n,)).copy()
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if not (self.illumination.size == self.timestamps.size == n):
            raise InvalidArgument("residual series fields differ in length")
        if n < 2:
            raise InvalidArgument("a residual series needs at least two images")
        if np.any(np.diff(self.timestamps) < 0):
            raise InvalidArgument("residual series must be chronologically ordered")

    def __len__(self):
        return self.values.size


def _channel(img_channels: int, coord: PixelCoord) -> int:
    return coord.channel if img_channels > 1 else 0


def site_observations(images: Sequence[RasterImage], coords: Sequence[PixelCoord], kernel: int = 3):
    """Residual and median-filtered value of every image at every coordinate.

    Returns two ``(n_images, n_coords)`` float arrays.
    """
    n = len(images)
    res = np.empty((n, len(coords)))
    illum = np.empty((n, len(coords)))
    for i, img in enumerate(images):
        data = img.data.astype(np.int32)
        med = median_array(data, kernel)
        for k, c in enumerate(coords):
            if not (0 <= c.row < img.height and 0 <= c.col < img.width):
                raise InvalidArgument(f"coordinate {c} outside {img.height}x{img.width} image")
            ch = _channel(img.channels, c)
            res[i, k] = data[c.row, c.col, ch] - med[c.row, c.col, ch]
            illum[i, k] = med[c.row, c.col, ch]
    return res, illum


def extract_residual_series(
    images: Sequence[RasterImage],
    coords: Sequence[PixelCoord],
    metas: Sequence[AcquisitionMeta],
    kernel: int = 3,
) -> list[ResidualSeries]:
    if len(images) != len(metas):
        raise InvalidArgument("one meta record per image required")
    times = np.array([m.timestamp for m in metas])
    if np.any(np.diff(times) < 0):
        raise InvalidArgument("images must be ordered by timestamp")
    res, illum = site_observations(images, coords, kernel)
    tau = np.array([m.tau for m in metas])
    return [ResidualSeries(c, res[:, k], illum[:, k], tau, times) for k, c in enumerate(coords)]


@dataclass
class SegmentFit:
    """Gaussian fit of residual = I*K + tau*D + c on one side of the onset."""

    K: float = 0.0
    D: float = 0.0
    c: float = 0.0
    sigma: float = SIGMA_FLOOR
    dropped: list = field(default_factory=list)
    n: int = 0

    def mean(self, illumination, tau):
        return illumination * self.K + tau * self.D + self.c

    def as_dict(self) -> dict:
        return {"K": self.K, "D": self.D, "c": self.c, "sigma": self.sigma,
                "dropped": list(self.dropped), "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentFit":
        return cls(float(d["K"]), float(d["D"]), float(d["c"]), float(d["sigma"]),
                   list(d.get("dropped", [])), int(d.get("n", 0)))


@dataclass
class DefectEstimate:
    """Onset index ``j`` (first defective image; ``len`` = never) and both-side parameters."""

    coord: PixelCoord
    onset_index_j: int
    params_before: SegmentFit
    params_after: SegmentFit
    series_length: int
    log_likelihood: float = 0.0

    def __post_init__(self):
        if not 0 <= self.onset_index_j <= self.series_length:
            raise InvalidArgument("onset index outside [0, len]")
        if self.params_before.sigma <= 0 or self.params_after.sigma <= 0:
            raise InvalidArgument("sigma must be positive on both sides")

    def params_at(self, j: int) -> SegmentFit:
        return self.params_after if j >= self.onset_index_j else self.params_before

    def as_dict(self) -> dict:
        return {
            "coord": self.coord.as_dict(),
            "onset_index_j": self.onset_index_j,
            "params_before": self.params_before.as_dict(),
            "params_after": self.params_after.as_dict(),
            "series_length": self.series_length,
            "log_likelihood": self.log_likelihood,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DefectEstimate":
        return cls(
            PixelCoord.from_dict(d["coord"]),
            int(d["onset_index_j"]),
            SegmentFit.from_dict(d["params_before"]),
            SegmentFit.from_dict(d["params_after"]),
            int(d["series_length"]),
            float(d.get("log_likelihood", 0.0)),
        )


_NAMES = ("K", "D", "c")


class _PrefixFit:
    """Least-squares fits of any contiguous segment from prefix sums of the normal equations."""

    def __init__(self, y, illum, tau):
        X = np.column_stack([illum, tau, np.ones_like(y)])
        self.X = X
        self.y = y
        z = np.zeros((1,))
        self.n = y.size
        self.sxx = np.concatenate([np.zeros((1, 3, 3)), np.cumsum(X[:, :, None] * X[:, None, :], axis=0)])
        self.sxy = np.concatenate([np.zeros((1, 3)), np.cumsum(X * y[:, None], axis=0)])
        self.syy = np.concatenate([z, np.cumsum(y * y)])
        self.s1 = np.concatenate([np.zeros((1, 3)), np.cumsum(X, axis=0)])
        self.s2 = np.concatenate([np.zeros((1, 3)), np.cumsum(X * X, axis=0)])
        self.scale = np.maximum(np.abs(X).max(axis=0), 1.0)

    def fit(self, a: int, b: int, sigma_floor: float) -> tuple[SegmentFit, float]:
        """Fit rows ``[a, b)``; returns the fit and its maximized log-likelihood."""
        m = b - a
        mean = (self.s1[b] - self.s1[a]) / m
        var = (self.s2[b] - self.s2[a]) / m - mean * mean
        keep = [2]
        dropped = []
        for col in (0, 1):
            # a regressor constant over the segment is collinear with the intercept
            if var[col] > 1e-9 * self.scale[col] ** 2:
                keep.insert(len(keep) - 1, col)
            else:
                dropped.append(_NAMES[col])
        while len(keep) >= m and len(keep) > 1:
            dropped.append(_NAMES[keep.pop(0)])
        idx = np.array(keep)
        A = (self.sxx[b] - self.sxx[a])[np.ix_(idx, idx)]
        v = (self.sxy[b] - self.sxy[a])[idx]
        beta, *_ = np.linalg.lstsq(A, v, rcond=1e-12)
        syy = self.syy[b] - self.syy[a]
        rss = max(float(syy - beta @ v), 0.0)
        if rss < 1e-6 * max(syy, 1.0):
            # cancellation-prone: recompute directly
            r = self.y[a:b] - self.X[a:b][:, idx] @ beta
            rss = float(r @ r)
        sigma = max(math.sqrt(rss / m), sigma_floor)
        ll = -0.5 * m * math.log(2 * math.pi * sigma * sigma) - rss / (2 * sigma * sigma)
        coef = dict.fromkeys(_NAMES, 0.0)
        for k, col in enumerate(keep):
            coef[_NAMES[col]] = float(beta[k])
        return SegmentFit(coef["K"], coef["D"], coef["c"], sigma, sorted(dropped), m), ll


def estimate_onset_and_params(
    series: ResidualSeries,
    sigma_floor: float = SIGMA_FLOOR,
    present_threshold: Optional[float] = None,
) -> DefectEstimate:
    """Maximum-likelihood onset index and per-side (K, D, c, sigma).

    Every split ``0 < j < len`` is scored by the two-segment Gaussian
    log-likelihood minus a BIC charge for the extra segment. The
    single-segment hypothesis is reported as ``j = len`` (never defective),
    or as ``j = 0`` when ``present_threshold`` is given and the fitted mean
    residual reaches it. Ties go to the smaller ``j``.
    """
    n = len(series)
    if n < 4:
        raise InvalidArgument("onset estimation needs at least 4 images")
    pf = _PrefixFit(series.values, series.illumination, series.tau)

    whole, best_ll = pf.fit(0, n, sigma_floor)
    best_score, best_j = best_ll, n
    best = (whole, whole)
    log_n = math.log(n)
    for j in range(1, n):
        before, ll_b = pf.fit(0, j, sigma_floor)
        after, ll_a = pf.fit(j, n, sigma_floor)
        n_coef = 3 - len(after.dropped)
        score = ll_b + ll_a - 0.5 * (n_coef + 2) * log_n
        if score > best_score + 1e-9 * abs(best_score):
            best_score, best_j, best_ll = score, j, ll_b + ll_a
            best = (before, after)
    if best_j == n and present_threshold is not None:
        if float(np.mean(series.values)) >= present_threshold:
            best_j = 0
    before, after = best
    return DefectEstimate(series.coord, best_j, before, after, n, best_ll)


@dataclass
class DistanceReport:
    status: str  # ok | insufficient data
    bin_edges: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    statistic: float = float("nan")
    p_value: float = float("nan")
    dof: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "bin_edges": self.bin_edges.tolist(),
            "observed": self.observed.tolist(),
            "expected": self.expected.tolist(),
            "statistic": self.statistic,
            "p_value": self.p_value,
            "dof": self.dof,
        }


def _pair_hist(points: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.histogram(pdist(points), bins=edges)[0].astype(float)


def _uniform_points(rng, n: int, height: int, width: int) -> np.ndarray:
    sites = rng.choice(height * width, size=n, replace=False)
    return np.column_stack(np.divmod(sites, width)).astype(float)


def inter_defect_distance_histogram(
    coords: Sequence[PixelCoord],
    dims: tuple,
    bins: int = 16,
    placements: int = 200,
    null_draws: int = 200,
    seed: int = 0,
) -> DistanceReport:
    """Pairwise-distance histogram against a uniform-placement baseline.

    Expected bin counts are the mean over ``placements`` uniform placements
    of the same number of defects. Pair distances are not independent, so
    the Pearson statistic is referred to a chi-square whose scale and degrees
    of freedom are moment-matched to ``null_draws`` further uniform
    placements.
    """
    if len(coords) < 2:
        raise InvalidArgument("need at least two coordinates")
    height, width = dims
    edges = np.linspace(0.0, math.hypot(height - 1, width - 1) + 1e-9, bins + 1)
    pts = np.array([[c.row, c.col] for c in coords], dtype=float)
    observed = _pair_hist(pts, edges)
    n = len(coords)
    pairs = n * (n - 1) // 2
    if pairs < 2 * bins:
        return DistanceReport("insufficient data", edges, observed, np.full(bins, np.nan))
    rng = np.random.default_rng(seed)
    expected = np.mean([_pair_hist(_uniform_points(rng, n, height, width), edges) for _ in range(placements)], axis=0)
    expected = np.maximum(expected, 1e-9)

    def pearson(h):
        return float(np.sum((h - expected) ** 2 / expected))

    null = np.array([pearson(_pair_hist(_uniform_points(rng, n, height, width), edges)) for _ in range(null_draws)])
    m, v = null.mean(), null.var(ddof=1)
    scale = v / (2 * m)
    dof = 2 * m * m / v
    stat = pearson(observed)
    return DistanceReport("ok", edges, observed, expected, stat, chi2_sf(stat / scale, dof) if dof > 0 else float("nan"), dof)


def sector_uniformity_test(coords: Sequence[PixelCoord], dims: tuple, grid: int = 4) -> tuple[float, float]:
    """Chi-square test of defect counts over a ``grid x grid`` sector partition.

    Expected counts are proportional to the number of sites in each sector,
    so dimensions need not be divisible by ``grid``.
    """
    height, width = dims
    if grid < 1 or grid > min(height, width) or grid * grid < 2:
        raise InvalidArgument(f"grid {grid} does not partition a {height}x{width} sensor")
    if not coords:
        raise InvalidArgument("no coordinates to test")
    r_edges = np.linspace(0, height, grid + 1).round().astype(int)
    c_edges = np.linspace(0, width, grid + 1).round().astype(int)
    rows = np.array([c.row for c in coords])
    cols = np.array([c.col for c in coords])
    if rows.min() < 0 or rows.max() >= height or cols.min() < 0 or cols.max() >= width:
        raise InvalidArgument("coordinates outside the sensor")
    ri = np.searchsorted(r_edges, rows, side="right") - 1
    ci = np.searchsorted(c_edges, cols, side="right") - 1
    observed = np.bincount(ri * grid + ci, minlength=grid * grid).astype(float)
    area = np.outer(np.diff(r_edges), np.diff(c_edges)).ravel() / float(height * width)
    return chi_square_gof(observed, area * len(coords))
