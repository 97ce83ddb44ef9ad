"""Lossless image files: PNG (8/16-bit, gray/RGB) and PGM/PPM."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .errors import InvalidArgument
from .imaging import RasterImage

SUFFIXES = {".png", ".pgm", ".ppm", ".pnm"}


def read_image(path) -> RasterImage:
    path = Path(path)
    if path.suffix.lower() not in SUFFIXES:
        raise InvalidArgument(f"unsupported image format: {path}")
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise OSError(f"cannot read image {path}")
    if data.ndim == 3:
        if data.shape[2] == 4:
            data = data[:, :, :3]
        data = data[:, :, ::-1]
    if data.dtype == np.uint8:
        bit_depth = 8
    elif data.dtype == np.uint16:
        bit_depth = 16
    else:
        raise InvalidArgument(f"{path}: unsupported sample type {data.dtype}")
    return RasterImage(np.ascontiguousarray(data), bit_depth)


def write_image(path, img: RasterImage) -> Path:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in SUFFIXES:
        raise InvalidArgument(f"unsupported image format: {path}")
    if suffix == ".pgm" and img.channels != 1:
        raise InvalidArgument("PGM holds single-channel images only")
    if suffix == ".ppm" and img.channels != 3:
        raise InvalidArgument("PPM holds RGB images only")
    data = img.data[:, :, 0] if img.channels == 1 else img.data[:, :, ::-1]
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(data)):
        raise OSError(f"cannot write image {path}")
    return path
