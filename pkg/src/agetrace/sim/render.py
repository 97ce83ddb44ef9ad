"""Frame rendering: per-site sensor response in the Bayer domain, then demosaicing."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import InvalidArgument
from ..imaging import AcquisitionMeta, RasterImage, _RGGB, demosaic_array
from .defects import SensorProfile, _response, defect_maps


def mosaic(rgb: np.ndarray) -> np.ndarray:
    """Sample an ``(h, w, 3)`` field through the RGGB color filter array."""
    h, w = rgb.shape[:2]
    rows, cols = np.indices((h, w))
    plane = _RGGB[rows % 2, cols % 2]
    return np.take_along_axis(rgb, plane[:, :, None], axis=2)[:, :, 0]


def render_frame(
    profile: SensorProfile,
    active_defects,
    scene: Optional[np.ndarray],
    meta: AcquisitionMeta,
    model: str = "additive",
    rng: Optional[np.random.Generator] = None,
    demosaic: bool = True,
) -> RasterImage:
    """Render one capture.

    ``scene`` is Bayer-domain illumination ``(h, w)`` or an RGB field
    ``(h, w, 3)`` that is sampled through the CFA; dark fields ignore it.
    Read noise is drawn from ``rng`` when given, otherwise it is zero.
    With ``demosaic=False`` the raw single-channel mosaic is returned.
    """
    shape = (profile.height, profile.width)
    if meta.kind == "dark-field" or scene is None:
        if scene is None and meta.kind != "dark-field":
            raise InvalidArgument("a scene is required unless the frame is a dark field")
        illum = np.zeros(shape)
    else:
        scene = np.asarray(scene, dtype=float)
        if scene.shape[:2] != shape or scene.ndim not in (2, 3):
            raise InvalidArgument(f"scene shape {scene.shape} does not match sensor {shape}")
        illum = mosaic(scene) if scene.ndim == 3 else scene
    if np.any(illum < 0):
        raise InvalidArgument("illumination must be >= 0")
    dark, offset = defect_maps(shape, active_defects)
    theta = 0.0
    if rng is not None and profile.read_noise_sigma > 0:
        theta = rng.normal(0.0, profile.read_noise_sigma, shape)
    raw = _response(illum, profile.prnu_field, dark, offset, meta, model, theta)
    raw = np.clip(np.rint(raw), 0, profile.max_value)
    if not demosaic:
        return RasterImage(raw, profile.bit_depth)
    return RasterImage.from_float(demosaic_array(raw), profile.bit_depth)
