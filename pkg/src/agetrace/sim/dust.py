"""Sensor dust: spot geometry, focal-length shift and shadow rendering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..imaging import AcquisitionMeta, RasterImage

ALPHA_MAX = 0.6
F_NUMBER_SCALE = 20.0


@dataclass(frozen=True)
class DustParticle:
    """A particle resting on the sensor cover glass.

    ``position`` is ``(row, col)`` on the sensor plane in pixel units.
    """

    particle_diameter_um: float
    sensor_distance_mm: float
    position: tuple
    deposit_time: float = 0.0

    def __post_init__(self):
        if not self.particle_diameter_um > 0:
            raise InvalidArgument("particle diameter must be > 0")
        if self.sensor_distance_mm < 0:
            raise InvalidArgument("sensor distance must be >= 0")

    def as_dict(self) -> dict:
        return {
            "particle_diameter_um": self.particle_diameter_um,
            "sensor_distance_mm": self.sensor_distance_mm,
            "position": list(self.position),
            "deposit_time": self.deposit_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DustParticle":
        return cls(
            float(d["particle_diameter_um"]),
            float(d["sensor_distance_mm"]),
            tuple(float(v) for v in d["position"]),
            float(d.get("deposit_time", 0.0)),
        )


def dust_spot_diameter(particle: DustParticle, focal_mm: float, aperture_diameter_mm: float) -> float:
    """Spot diameter in mm: ``D*f/(f-t) + A*t/(f-t)``."""
    f, t = focal_mm, particle.sensor_distance_mm
    if f <= t:
        raise InvalidArgument(f"focal length {f} mm must exceed particle distance {t} mm")
    if aperture_diameter_mm < 0:
        raise InvalidArgument("aperture diameter must be >= 0")
    d = particle.particle_diameter_um / 1000.0
    return d * f / (f - t) + aperture_diameter_mm * t / (f - t)


def peak_attenuation(f_number: float, alpha_max: float = ALPHA_MAX) -> float:
    """Darkening at the spot center; stronger for narrow light cones (high f-number)."""
    return alpha_max * (1.0 - math.exp(-f_number / F_NUMBER_SCALE))


def projected_position(particle: DustParticle, shape: tuple, focal_mm: float) -> tuple:
    """Radial shift of the shadow away from the image center as the focal length shortens."""
    f, t = focal_mm, particle.sensor_distance_mm
    if f <= t:
        raise InvalidArgument(f"focal length {f} mm must exceed particle distance {t} mm")
    cr, cc = (shape[0] - 1) / 2.0, (shape[1] - 1) / 2.0
    scale = f / (f - t)
    r, c = particle.position
    return cr + (r - cr) * scale, cc + (c - cc) * scale


def dust_transmission(shape: tuple, particles, meta: AcquisitionMeta, pixel_size_um: float,
                      alpha_max: float = ALPHA_MAX) -> np.ndarray:
    """Multiplicative light transmission map (1 = unobstructed) for ``shape = (h, w)``."""
    h, w = shape[:2]
    trans = np.ones((h, w))
    if not particles:
        return trans
    aperture = meta.focal_mm / meta.f_number
    alpha = peak_attenuation(meta.f_number, alpha_max)
    rows, cols = np.indices((h, w), dtype=float)
    for p in particles:
        pr, pc = projected_position(p, (h, w), meta.focal_mm)
        if not (0 <= pr <= h - 1 and 0 <= pc <= w - 1):
            raise InvalidArgument(f"dust spot center {(pr, pc)} falls outside the image")
        radius = dust_spot_diameter(p, meta.focal_mm, aperture) * 1000.0 / pixel_size_um / 2.0
        radius = max(radius, 0.5)
        r2 = (rows - pr) ** 2 + (cols - pc) ** 2
        shade = alpha * np.exp(-r2 / (2.0 * (radius / 2.0) ** 2))
        trans *= np.where(r2 <= radius * radius, 1.0 - shade, 1.0)
    return trans


def render_dust(img: RasterImage, particles, meta: AcquisitionMeta, pixel_size_um: float = 4.0,
                alpha_max: float = ALPHA_MAX) -> RasterImage:
    """Darken ``img`` with the shadows of ``particles`` under the capture settings in ``meta``."""
    if not particles:
        return img
    trans = dust_transmission((img.height, img.width), particles, meta, pixel_size_um, alpha_max)
    return RasterImage.from_float(img.data * trans[:, :, None], img.bit_depth)
