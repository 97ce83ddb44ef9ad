"""Synthetic temporal datasets with ground-truth defects and dust."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .. import rng as rngs
from ..errors import InvalidArgument
from ..imageio import write_image
from ..imaging import AcquisitionMeta, RasterImage
from ..manifest import DatasetManifest, ManifestRecord
from .defects import DefectRecord, DefectSampling, SensorProfile, sample_defect_timeline
from .dust import ALPHA_MAX, DustParticle, dust_transmission
from .render import render_frame
from .scenes import SceneConfig, generate_scene


@dataclass
class ProfileConfig:
    width: int = 64
    height: int = 64
    pixel_size_um: float = 4.0
    sensor_type: str = "CCD"
    prnu_sigma: float = 0.0
    read_noise_sigma: float = 0.0
    bit_depth: int = 8
    coeff_A: Optional[float] = None
    coeff_B: Optional[float] = None
    coeff_C: Optional[float] = None

    def __post_init__(self):
        if self.width < 2 or self.height < 2 or self.width % 2 or self.height % 2:
            raise InvalidArgument("width/height: must be even and >= 2")
        if not self.pixel_size_um > 0:
            raise InvalidArgument("pixel_size_um: must be > 0")
        if self.prnu_sigma < 0 or self.read_noise_sigma < 0:
            raise InvalidArgument("prnu_sigma/read_noise_sigma: must be >= 0")
        if self.bit_depth not in (8, 16):
            raise InvalidArgument("bit_depth: must be 8 or 16")


@dataclass
class MetaRanges:
    iso: list = field(default_factory=lambda: [100.0])
    exposure_s: tuple = (0.5, 0.5)
    focal_mm: tuple = (50.0, 50.0)
    f_number: tuple = (8.0, 8.0)
    dark_iso: float = 100.0
    dark_exposure_s: float = 1.0

    def __post_init__(self):
        if not self.iso or any(v <= 0 for v in self.iso):
            raise InvalidArgument("iso: must be a non-empty list of positive values")
        for name in ("exposure_s", "focal_mm", "f_number"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidArgument(f"{name}: must be a range 0 < lo <= hi")
        if self.dark_iso <= 0 or self.dark_exposure_s <= 0:
            raise InvalidArgument("dark_iso/dark_exposure_s: must be > 0")


@dataclass
class DefectConfig:
    """``mode='poisson'`` samples a timeline; ``forced`` defects are always added."""

    mode: str = "poisson"
    iso_nominal: float = 400.0
    rate_per_day: Optional[float] = None
    dark_current_range: tuple = (20.0, 200.0)
    offset_range: tuple = (5.0, 40.0)
    p_zero_offset: float = 0.35
    p_fully_stuck: float = 0.0
    forced: list = field(default_factory=list)


@dataclass
class DustConfig:
    particles: list = field(default_factory=list)
    alpha_max: float = ALPHA_MAX


@dataclass
class DatasetSpec:
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    session_times: list = field(default_factory=lambda: [0.0])
    images_per_session: int = 1
    query_images_per_session: int = 0
    dark_fields_per_session: int = 0
    image_spacing_days: float = 0.01
    scene: SceneConfig = field(default_factory=SceneConfig)
    meta_ranges: MetaRanges = field(default_factory=MetaRanges)
    defects: DefectConfig = field(default_factory=DefectConfig)
    dust: DustConfig = field(default_factory=DustConfig)
    prnu_drift_sigma: float = 0.0
    demosaic: bool = True
    response_model: str = "additive"
    rng_seed: int = 0
    dataset_id: str = "synthetic"

    def __post_init__(self):
        times = [float(t) for t in self.session_times]
        if not times:
            raise InvalidArgument("session_times: at least one session required")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgument("session_times: must be strictly increasing")
        if times[0] < 0:
            raise InvalidArgument("session_times: must be >= 0")
        self.session_times = times
        if self.images_per_session < 1:
            raise InvalidArgument("images_per_session: must be >= 1")
        if self.query_images_per_session < 0 or self.dark_fields_per_session < 0:
            raise InvalidArgument("query_images_per_session/dark_fields_per_session: must be >= 0")
        per_session = self.images_per_session + self.query_images_per_session + 1
        if self.image_spacing_days < 0 or (
            len(times) > 1 and per_session * self.image_spacing_days > min(np.diff(times))
        ):
            raise InvalidArgument("image_spacing_days: sessions would overlap")
        if self.defects.mode not in ("poisson", "none"):
            raise InvalidArgument("defects.mode: must be 'poisson' or 'none'")
        if self.response_model not in ("additive", "gain"):
            raise InvalidArgument("response_model: must be 'additive' or 'gain'")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return _build(cls, d, "spec")

    def as_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


_NESTED = {
    "profile": ProfileConfig,
    "scene": SceneConfig,
    "meta_ranges": MetaRanges,
    "defects": DefectConfig,
    "dust": DustConfig,
}


def _build(cls, d, path: str):
    if not isinstance(d, dict):
        raise InvalidArgument(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise InvalidArgument(f"{path}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for key, value in d.items():
        if cls is DatasetSpec and key in _NESTED:
            value = _build(_NESTED[key], value, f"{path}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except InvalidArgument as exc:
        raise InvalidArgument(f"{path}.{exc}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"{path}: {exc}") from None


@dataclass
class SimulatedFrame:
    image: RasterImage
    meta: AcquisitionMeta
    session_index: int
    role: str  # trusted | query | dark
    index: int

    @property
    def class_label(self) -> Optional[int]:
        return None if self.role == "query" else self.session_index


@dataclass
class GroundTruth:
    defects: list
    dust: list
    profile: dict
    rate_per_day: Optional[float]
    session_times: list

    def active_defects(self, t: float) -> list:
        return [d for d in self.defects if d.active(t)]

    def as_dict(self) -> dict:
        return {
            "defects": [d.as_dict() for d in self.defects],
            "dust": [p.as_dict() for p in self.dust],
            "profile": self.profile,
            "rate_per_day": self.rate_per_day,
            "session_times": self.session_times,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            [DefectRecord.from_dict(x) for x in d.get("defects", [])],
            [DustParticle.from_dict(x) for x in d.get("dust", [])],
            d.get("profile", {}),
            d.get("rate_per_day"),
            d.get("session_times", []),
        )


def build_profile(spec: DatasetSpec) -> SensorProfile:
    p = spec.profile
    return SensorProfile.create(
        p.width, p.height, p.pixel_size_um, p.sensor_type,
        prnu_sigma=p.prnu_sigma, seed=spec.rng_seed,
        coeff_A=p.coeff_A, coeff_B=p.coeff_B, coeff_C=p.coeff_C,
        read_noise_sigma=p.read_noise_sigma, bit_depth=p.bit_depth,
    )


def _last_timestamp(spec: DatasetSpec) -> float:
    per = spec.images_per_session + spec.query_images_per_session
    return spec.session_times[-1] + per * spec.image_spacing_days


def ground_truth(spec: DatasetSpec, profile: Optional[SensorProfile] = None) -> GroundTruth:
    profile = profile or build_profile(spec)
    cfg = spec.defects
    defects: list[DefectRecord] = []
    if cfg.mode == "poisson":
        sampling = DefectSampling(
            tuple(cfg.dark_current_range), tuple(cfg.offset_range), cfg.p_zero_offset, cfg.p_fully_stuck
        )
        defects = sample_defect_timeline(
            profile, _last_timestamp(spec), cfg.iso_nominal, spec.rng_seed, cfg.rate_per_day, sampling
        )
    forced = [d if isinstance(d, DefectRecord) else DefectRecord.from_dict(d) for d in cfg.forced]
    for d in forced:
        if not (0 <= d.coord.row < profile.height and 0 <= d.coord.col < profile.width):
            raise InvalidArgument(f"spec.defects.forced: {d.coord} outside the sensor")
    taken = {(d.coord.row, d.coord.col) for d in forced}
    defects = sorted(
        forced + [d for d in defects if (d.coord.row, d.coord.col) not in taken],
        key=lambda d: (d.onset_time, d.coord.row, d.coord.col),
    )
    dust = [p if isinstance(p, DustParticle) else DustParticle.from_dict(p) for p in spec.dust.particles]
    return GroundTruth(defects, dust, profile.summary(), cfg.rate_per_day, list(spec.session_times))


def _sample_meta(spec: DatasetSpec, rng: np.random.Generator, timestamp: float) -> AcquisitionMeta:
    m = spec.meta_ranges
    return AcquisitionMeta(
        timestamp=timestamp,
        iso=float(rng.choice(np.asarray(m.iso, dtype=float))),
        exposure_s=float(rng.uniform(*m.exposure_s)),
        focal_mm=float(rng.uniform(*m.focal_mm)),
        f_number=float(rng.uniform(*m.f_number)),
        kind="scene",
        device_id=spec.dataset_id,
    )


def session_prnu(spec: DatasetSpec, profile: SensorProfile) -> list[np.ndarray]:
    """PRNU field per session; drifts by independent increments when ``prnu_drift_sigma > 0``."""
    fields = []
    k = profile.prnu_field
    for s in range(len(spec.session_times)):
        if s and spec.prnu_drift_sigma > 0:
            step = rngs.stream(spec.rng_seed, "prnu-drift", s).normal(
                0.0, spec.prnu_drift_sigma, k.shape
            )
            k = np.clip(k + step, -0.95, 0.95)
        fields.append(k)
    return fields


def iter_frames(spec: DatasetSpec, truth: Optional[GroundTruth] = None) -> Iterator[SimulatedFrame]:
    """Render every frame of the dataset in session order; deterministic in ``spec.rng_seed``."""
    profile = build_profile(spec)
    truth = truth or ground_truth(spec, profile)
    shape = (profile.height, profile.width)
    n_sessions = len(spec.session_times)
    prnu = session_prnu(spec, profile)
    seed = spec.rng_seed
    for s, t0 in enumerate(spec.session_times):
        prof = profile if prnu[s] is profile.prnu_field else profile.with_prnu(prnu[s])
        for i in range(spec.dark_fields_per_session):
            meta = AcquisitionMeta(
                t0, spec.meta_ranges.dark_iso, spec.meta_ranges.dark_exposure_s,
                kind="dark-field", device_id=spec.dataset_id,
            )
            img = render_frame(
                prof, truth.active_defects(t0), None, meta, spec.response_model,
                rngs.stream(seed, "noise", "dark", s, i), demosaic=False,
            )
            yield SimulatedFrame(img, meta, s, "dark", i)
        n_trusted, n_query = spec.images_per_session, spec.query_images_per_session
        # trusted and query images interleave in time within a session
        slots = [((i + 0.5) / n_trusted, 0, "trusted", i) for i in range(n_trusted)]
        slots += [((i + 0.5) / n_query, 1, "query", i) for i in range(n_query)]
        for pos, (_, _, role, i) in enumerate(sorted(slots)):
            ts = t0 + (pos + 1) * spec.image_spacing_days
            meta = _sample_meta(spec, rngs.stream(seed, "meta", role, s, i), ts)
            scene = generate_scene(
                spec.scene, *shape, session=s, image_index=i, n_sessions=n_sessions,
                rng=rngs.stream(seed, "scene", role, s, i),
            )
            dust = [p for p in truth.dust if p.deposit_time <= ts]
            if dust:
                scene = scene * dust_transmission(
                    shape, dust, meta, profile.pixel_size_um, spec.dust.alpha_max
                )[:, :, None]
            img = render_frame(
                prof, truth.active_defects(ts), scene, meta, spec.response_model,
                rngs.stream(seed, "noise", role, s, i), demosaic=spec.demosaic,
            )
            yield SimulatedFrame(img, meta, s, role, i)


def simulate(spec: DatasetSpec) -> tuple[list[SimulatedFrame], GroundTruth]:
    """In-memory dataset: all frames plus ground truth."""
    truth = ground_truth(spec)
    return list(iter_frames(spec, truth)), truth


def synthesize_dataset(spec: DatasetSpec, out_dir) -> tuple[DatasetManifest, GroundTruth]:
    """Write ``images/``, ``manifest.jsonl``, ``ground_truth.json`` and ``spec_echo.json``."""
    out = Path(out_dir)
    truth = ground_truth(spec)
    records = []
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        for fr in iter_frames(spec, truth):
            rel = f"images/s{fr.session_index:03d}_{fr.role}_{fr.index:04d}.png"
            write_image(out / rel, fr.image)
            records.append(ManifestRecord(rel, fr.meta, fr.session_index, fr.class_label))
        manifest = DatasetManifest(records, spec.dataset_id, root=out)
        manifest.write(out / "manifest.jsonl")
        _dump(out / "ground_truth.json", truth.as_dict())
        _dump(out / "spec_echo.json", spec.as_dict())
    except OSError as exc:
        raise OSError(f"{getattr(exc, 'filename', None) or out}: {exc.strerror or exc}") from exc
    return manifest, truth


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
