"""Sensor profiles, defect density growth, defect timelines and the pixel response models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import rng as rngs
from ..errors import InvalidArgument
from ..imaging import AcquisitionMeta, PixelCoord, cfa_channel

DAYS_PER_YEAR = 365.25

# Empirical power-law coefficients (A, B, C) of defect density vs pixel size and ISO.
GROWTH_COEFFICIENTS = {
    "CCD": (10**-1.849, -2.25, 0.687),
    "APS": (10**-0.98, -3.03, 0.506),
}

DEFECT_TYPES = ("hot", "partially-stuck-hot", "fully-stuck")


@dataclass(eq=False)
class SensorProfile:
    """A simulated imager. Geometry is in Bayer sites; ``prnu_field`` is the per-site K."""

    width: int
    height: int
    pixel_size_um: float
    sensor_type: str = "CCD"
    coeff_A: Optional[float] = None
    coeff_B: Optional[float] = None
    coeff_C: Optional[float] = None
    prnu_field: Optional[np.ndarray] = None
    read_noise_sigma: float = 0.0
    bit_depth: int = 8

    def __post_init__(self):
        if self.sensor_type not in GROWTH_COEFFICIENTS:
            raise InvalidArgument(f"sensor_type must be CCD or APS, got {self.sensor_type!r}")
        if self.width < 2 or self.height < 2 or self.width % 2 or self.height % 2:
            raise InvalidArgument("sensor dimensions must be even and >= 2")
        if not self.pixel_size_um > 0:
            raise InvalidArgument("pixel_size_um must be > 0")
        if self.read_noise_sigma < 0:
            raise InvalidArgument("read_noise_sigma must be >= 0")
        if self.bit_depth not in (8, 16):
            raise InvalidArgument("bit_depth must be 8 or 16")
        a, b, c = GROWTH_COEFFICIENTS[self.sensor_type]
        self.coeff_A = a if self.coeff_A is None else self.coeff_A
        self.coeff_B = b if self.coeff_B is None else self.coeff_B
        self.coeff_C = c if self.coeff_C is None else self.coeff_C
        if self.prnu_field is None:
            self.prnu_field = np.zeros((self.height, self.width))
        self.prnu_field = np.asarray(self.prnu_field, dtype=float)
        if self.prnu_field.shape != (self.height, self.width):
            raise InvalidArgument(
                f"prnu_field shape {self.prnu_field.shape} != {(self.height, self.width)}"
            )
        if np.any(np.abs(self.prnu_field) >= 1):
            raise InvalidArgument("|K| must stay below 1")

    @classmethod
    def create(
        cls,
        width: int,
        height: int,
        pixel_size_um: float,
        sensor_type: str = "CCD",
        prnu_sigma: float = 0.0,
        seed: int = 0,
        **kwargs,
    ) -> "SensorProfile":
        """Profile with a zero-mean Gaussian PRNU field drawn from ``seed``."""
        k = rngs.stream(seed, "prnu").normal(0.0, prnu_sigma, (height, width)) if prnu_sigma else None
        if k is not None:
            k = np.clip(k - k.mean(), -0.95, 0.95)
        return cls(width, height, pixel_size_um, sensor_type, prnu_field=k, **kwargs)

    @property
    def area_mm2(self) -> float:
        side = self.pixel_size_um / 1000.0
        return self.width * self.height * side * side

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def with_prnu(self, prnu_field: np.ndarray) -> "SensorProfile":
        return SensorProfile(
            self.width, self.height, self.pixel_size_um, self.sensor_type,
            self.coeff_A, self.coeff_B, self.coeff_C, prnu_field,
            self.read_noise_sigma, self.bit_depth,
        )

    def summary(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "pixel_size_um": self.pixel_size_um,
            "sensor_type": self.sensor_type,
            "coeff_A": self.coeff_A,
            "coeff_B": self.coeff_B,
            "coeff_C": self.coeff_C,
            "read_noise_sigma": self.read_noise_sigma,
            "bit_depth": self.bit_depth,
        }


@dataclass
class DefectRecord:
    coord: PixelCoord
    defect_type: str
    dark_current_D: float
    offset_c: float
    onset_time: float

    def __post_init__(self):
        if self.defect_type not in DEFECT_TYPES:
            raise InvalidArgument(f"unknown defect type {self.defect_type!r}")
        if self.dark_current_D < 0 or self.offset_c < 0:
            raise InvalidArgument("dark current and offset must be >= 0")
        if self.defect_type == "hot" and self.dark_current_D <= 0:
            raise InvalidArgument("a hot pixel needs a positive dark current")

    def active(self, t: float) -> bool:
        return self.onset_time <= t

    def as_dict(self) -> dict:
        return {
            "coord": self.coord.as_dict(),
            "type": self.defect_type,
            "D": self.dark_current_D,
            "c": self.offset_c,
            "onset_time": self.onset_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DefectRecord":
        coord = PixelCoord.from_dict(d["coord"])
        if "channel" not in d["coord"]:
            coord = PixelCoord(coord.row, coord.col, cfa_channel(coord.row, coord.col))
        c = float(d.get("c", 0.0))
        kind = d.get("type") or ("hot" if c == 0 else "partially-stuck-hot")
        return cls(coord, kind, float(d.get("D", 0.0)), c, float(d["onset_time"]))


@dataclass
class DefectSampling:
    """How defect parameters are drawn.

    D is log-uniform over ``dark_current_range`` (intensity units per second
    at ISO 100); the offset is zero with probability ``p_zero_offset`` and
    uniform over ``offset_range`` otherwise. A fraction ``p_fully_stuck`` get
    an offset at full scale.
    """

    dark_current_range: tuple = (20.0, 200.0)
    offset_range: tuple = (5.0, 40.0)
    p_zero_offset: float = 0.35
    p_fully_stuck: float = 0.0

    def __post_init__(self):
        lo, hi = self.dark_current_range
        if not 0 < lo <= hi:
            raise InvalidArgument("dark_current_range must satisfy 0 < lo <= hi")
        if not 0 <= self.offset_range[0] <= self.offset_range[1]:
            raise InvalidArgument("offset_range must satisfy 0 <= lo <= hi")
        for name in ("p_zero_offset", "p_fully_stuck"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidArgument(f"{name} must be a probability")


def defect_density(profile: SensorProfile, iso: float) -> float:
    """Defects per year per mm^2: A * S^B * ISO^C."""
    if not iso > 0:
        raise InvalidArgument(f"iso must be > 0, got {iso}")
    return profile.coeff_A * profile.pixel_size_um**profile.coeff_B * iso**profile.coeff_C


def defect_rate_per_day(profile: SensorProfile, iso: float) -> float:
    return defect_density(profile, iso) * profile.area_mm2 / DAYS_PER_YEAR


def _draw_params(n: int, sampling: DefectSampling, bit_depth: int, rng: np.random.Generator):
    lo, hi = np.log10(sampling.dark_current_range)
    dark = 10.0 ** rng.uniform(lo, hi, n)
    zero = rng.random(n) < sampling.p_zero_offset
    offset = np.where(zero, 0.0, rng.uniform(*sampling.offset_range, n))
    stuck = rng.random(n) < sampling.p_fully_stuck
    offset = np.where(stuck, float(1 << bit_depth), offset)
    kinds = np.where(stuck, "fully-stuck", np.where(offset > 0, "partially-stuck-hot", "hot"))
    return dark, offset, kinds


def sample_defect_timeline(
    profile: SensorProfile,
    duration_days: float,
    iso_nominal: float = 400.0,
    rng_seed: int = 0,
    rate_per_day: Optional[float] = None,
    sampling: Optional[DefectSampling] = None,
) -> list[DefectRecord]:
    """Homogeneous Poisson defect arrivals over ``[0, duration_days]``.

    The rate follows the density power law at ``iso_nominal`` unless
    ``rate_per_day`` overrides it. Positions are uniform over Bayer sites
    without replacement.
    """
    if duration_days < 0:
        raise InvalidArgument("duration_days must be >= 0")
    sampling = sampling or DefectSampling()
    rate = defect_rate_per_day(profile, iso_nominal) if rate_per_day is None else rate_per_day
    if rate < 0:
        raise InvalidArgument("rate must be >= 0")
    n_sites = profile.width * profile.height
    expected = rate * duration_days
    if expected > 0.1 * n_sites:
        raise InvalidArgument(
            f"expected {expected:.0f} defects exceeds 10% of {n_sites} sites; model invalid"
        )
    if expected == 0:
        return []

    arrivals_rng = rngs.stream(rng_seed, "defect-arrivals")
    times = []
    t = 0.0
    chunk = int(expected + 6 * np.sqrt(expected) + 16)
    while True:
        gaps = arrivals_rng.exponential(1.0 / rate, chunk)
        cum = t + np.cumsum(gaps)
        keep = cum[cum <= duration_days]
        times.append(keep)
        if keep.size < chunk:
            break
        t = float(cum[-1])
    onset = np.concatenate(times)
    n = onset.size
    if n > n_sites:
        raise InvalidArgument("more defects than sites")

    sites = rngs.stream(rng_seed, "defect-sites").choice(n_sites, size=n, replace=False)
    dark, offset, kinds = _draw_params(n, sampling, profile.bit_depth, rngs.stream(rng_seed, "defect-params"))
    records = []
    for i in range(n):
        r, c = divmod(int(sites[i]), profile.width)
        records.append(
            DefectRecord(PixelCoord(r, c, cfa_channel(r, c)), str(kinds[i]), float(dark[i]), float(offset[i]), float(onset[i]))
        )
    return records


def pixel_response(
    illumination,
    defect: Optional[DefectRecord],
    meta: AcquisitionMeta,
    K=0.0,
    model: str = "additive",
    theta=0.0,
    bit_depth: int = 8,
):
    """Sensor output for incident illumination, clipped to the bit-depth range.

    ``additive``: ``I + I*K + tau*D + c + theta`` with ``tau = iso/100 * exposure``.
    ``gain``: ``m * (I*T_e + D*T_e + c)`` with ``m = iso/100``; PRNU and noise ignored.
    """
    I = np.asarray(illumination, dtype=float)
    if np.any(I < 0):
        raise InvalidArgument("illumination must be >= 0")
    D = defect.dark_current_D if defect is not None else 0.0
    c = defect.offset_c if defect is not None else 0.0
    y = _response(I, K, D, c, meta, model, theta)
    out = np.clip(y, 0, (1 << bit_depth) - 1)
    return float(out) if out.ndim == 0 else out


def _response(I, K, D, c, meta: AcquisitionMeta, model: str, theta):
    if model == "additive":
        return I + I * K + meta.tau * D + c + theta
    if model == "gain":
        return meta.gain * (I * meta.exposure_s + D * meta.exposure_s + c)
    raise InvalidArgument(f"unknown response model {model!r}")


def defect_maps(shape: tuple, defects, t: Optional[float] = None):
    """Dark-current and offset maps for the defects active at time ``t`` (all if None)."""
    dark = np.zeros(shape)
    offset = np.zeros(shape)
    for d in defects:
        if t is None or d.active(t):
            dark[d.coord.row, d.coord.col] = d.dark_current_D
            offset[d.coord.row, d.coord.col] = d.offset_c
    return dark, offset
