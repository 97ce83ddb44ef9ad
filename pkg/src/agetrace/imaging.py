"""Raster images, median filtering, residuals, Bayer demosaicing and block cropping.

Images are stored as ``(height, width, channels)`` integer arrays. All
functions here are pure: they never modify their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument

KINDS = ("dark-field", "bright-field", "scene")

# RGGB: (even, even) red, (odd, odd) blue, the rest green.
_RGGB = np.array([[0, 1], [1, 2]])


@dataclass(frozen=True)
class PixelCoord:
    row: int
    col: int
    channel: int = 0

    def as_dict(self) -> dict:
        return {"row": self.row, "col": self.col, "channel": self.channel}

    @classmethod
    def from_dict(cls, d: dict) -> "PixelCoord":
        return cls(int(d["row"]), int(d["col"]), int(d.get("channel", 0)))


@dataclass(frozen=True)
class AcquisitionMeta:
    """Capture context of one image.

    ``timestamp`` is in days since the device epoch.
    """

    timestamp: float
    iso: float = 100.0
    exposure_s: float = 1.0
    focal_mm: float = 50.0
    f_number: float = 8.0
    kind: str = "scene"
    device_id: str = "device-0"

    def __post_init__(self):
        if self.timestamp < 0:
            raise InvalidArgument(f"timestamp must be >= 0, got {self.timestamp}")
        for name in ("iso", "exposure_s", "focal_mm", "f_number"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be > 0, got {getattr(self, name)}")
        if self.kind not in KINDS:
            raise InvalidArgument(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def gain(self) -> float:
        """ISO amplification normalized to ISO 100."""
        return self.iso / 100.0

    @property
    def tau(self) -> float:
        """Dark-current scale factor: gain times exposure (temperature held constant)."""
        return self.gain * self.exposure_s

    def as_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "iso": self.iso,
            "exposure_s": self.exposure_s,
            "focal_mm": self.focal_mm,
            "f_number": self.f_number,
            "kind": self.kind,
            "device_id": self.device_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionMeta":
        keys = ("timestamp", "iso", "exposure_s", "focal_mm", "f_number", "kind", "device_id")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Pixel grid of shape ``(height, width, channels)`` with a bit depth of 8 or 16."""

    data: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise InvalidArgument(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise InvalidArgument(f"expected (h, w, 1|3) data, got shape {data.shape}")
        if data.size and (data.min() < 0 or data.max() > self.max_value):
            raise InvalidArgument(f"values outside [0, {self.max_value}]")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        if np.issubdtype(data.dtype, np.floating) and not np.all(data == np.round(data)):
            raise InvalidArgument("non-integer pixel values; round before wrapping")
        data = np.array(data, dtype=dtype)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_float(cls, values: np.ndarray, bit_depth: int = 8) -> "RasterImage":
        """Round half-to-even and clip a float array into a raster."""
        top = (1 << bit_depth) - 1
        return cls(np.clip(np.rint(values), 0, top), bit_depth)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.data, other.data)

    __hash__ = None


def cfa_channel(row: int, col: int) -> int:
    """Color plane (0=R, 1=G, 2=B) of a Bayer site in the RGGB layout."""
    return int(_RGGB[row % 2, col % 2])


def _check_kernel(kernel: int, height: int, width: int):
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidArgument(f"kernel must be odd and positive, got {kernel}")
    if kernel > min(height, width):
        raise InvalidArgument(f"kernel {kernel} larger than image {height}x{width}")


def median_array(values: np.ndarray, kernel: int = 3) -> np.ndarray:
    """Per-channel ``kernel x kernel`` median with edge replication.

    Accepts ``(h, w)`` or ``(h, w, c)`` arrays of any numeric dtype and
    returns the same shape and dtype.
    """
    values = np.asarray(values)
    _check_kernel(kernel, values.shape[0], values.shape[1])
    size = (kernel, kernel) if values.ndim == 2 else (kernel, kernel, 1)
    return ndimage.median_filter(values, size=size, mode="nearest")


def median_filter(img: RasterImage, kernel: int = 3) -> RasterImage:
    return RasterImage(median_array(img.data, kernel), img.bit_depth)


def residual(img: RasterImage, kernel: int = 3) -> np.ndarray:
    """Signed median-filter residual ``img - median_filter(img)`` as int32, never clipped."""
    data = img.data.astype(np.int32)
    return data - median_array(data, kernel)


def demosaic_array(bayer: np.ndarray) -> np.ndarray:
    """Bilinear RGGB demosaic of a float ``(h, w)`` mosaic into ``(h, w, 3)`` floats."""
    bayer = np.asarray(bayer, dtype=np.float64)
    h, w = bayer.shape
    if h % 2 or w % 2:
        raise InvalidArgument(f"Bayer mosaic needs even dimensions, got {h}x{w}")
    rows, cols = np.indices((h, w))
    plane = _RGGB[rows % 2, cols % 2]
    k_rb = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]]) / 4.0
    k_g = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]]) / 4.0
    out = np.empty((h, w, 3))
    for c, k in ((0, k_rb), (1, k_g), (2, k_rb)):
        sparse = np.where(plane == c, bayer, 0.0)
        # mirror keeps the CFA parity at the borders
        out[:, :, c] = ndimage.convolve(sparse, k, mode="mirror")
    return out


def demosaic_bilinear(bayer: RasterImage) -> RasterImage:
    if bayer.channels != 1:
        raise InvalidArgument("demosaic expects a single-channel Bayer mosaic")
    rgb = demosaic_array(bayer.data[:, :, 0])
    return RasterImage.from_float(rgb, bayer.bit_depth)


def block_origins(
    height: int,
    width: int,
    block_size: int,
    strategy: Literal["grid", "five-crop", "random"] = "grid",
    n: Optional[int] = None,
    seed: Optional[int] = None,
) -> list[tuple[int, int]]:
    """Top-left ``(row, col)`` origins of square blocks inside an image."""
    if block_size < 1 or block_size > min(height, width):
        raise InvalidArgument(f"block size {block_size} does not fit {height}x{width}")
    b = block_size
    if strategy == "grid":
        return [(r, c) for r in range(0, height - b + 1, b) for c in range(0, width - b + 1, b)]
    if strategy == "five-crop":
        bottom, right = height - b, width - b
        return [(0, 0), (0, right), (bottom, 0), (bottom, right), (bottom // 2, right // 2)]
    if strategy != "random":
        raise InvalidArgument(f"unknown crop strategy {strategy!r}")
    if n is None or seed is None:
        raise InvalidArgument("random cropping needs n and seed")
    capacity = (height // b) * (width // b)
    if n < 0 or n > capacity:
        raise InvalidArgument(f"{n} non-overlapping {b}px blocks cannot fit {height}x{width}")
    rng = np.random.default_rng(seed)
    origins: list[tuple[int, int]] = []
    attempts = 0
    while len(origins) < n and attempts < 200 * max(n, 1):
        attempts += 1
        r = int(rng.integers(0, height - b + 1))
        c = int(rng.integers(0, width - b + 1))
        if all(abs(r - r0) >= b or abs(c - c0) >= b for r0, c0 in origins):
            origins.append((r, c))
    if len(origins) < n:
        # dense request: pick grid cells, shifted by a random share of the slack
        cells = [(r, c) for r in range(height // b) for c in range(width // b)]
        pick = rng.choice(len(cells), size=n, replace=False)
        dr = int(rng.integers(0, height - (height // b) * b + 1))
        dc = int(rng.integers(0, width - (width // b) * b + 1))
        origins = [(cells[i][0] * b + dr, cells[i][1] * b + dc) for i in sorted(pick)]
    return origins


def crop_blocks(
    img: RasterImage,
    block_size: int,
    strategy: Literal["grid", "five-crop", "random"] = "grid",
    n: Optional[int] = None,
    seed: Optional[int] = None,
) -> list[tuple[RasterImage, PixelCoord]]:
    origins = block_origins(img.height, img.width, block_size, strategy, n, seed)
    b = block_size
    return [
        (RasterImage(img.data[r : r + b, c : c + b], img.bit_depth), PixelCoord(r, c))
        for r, c in origins
    ]
