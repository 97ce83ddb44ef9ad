"""Sensor aging simulation: defect growth, pixel response, dust, dataset synthesis."""

from .dataset import (
    DatasetSpec,
    DefectConfig,
    DustConfig,
    GroundTruth,
    MetaRanges,
    ProfileConfig,
    SimulatedFrame,
    iter_frames,
    simulate,
    synthesize_dataset,
)
from .defects import (
    GROWTH_COEFFICIENTS,
    DefectRecord,
    DefectSampling,
    SensorProfile,
    defect_density,
    defect_rate_per_day,
    pixel_response,
    sample_defect_timeline,
)
from .dust import DustParticle, dust_spot_diameter, projected_position, render_dust
from .render import mosaic, render_frame
from .scenes import SceneConfig, generate_scene

__all__ = [
    "DatasetSpec", "DefectConfig", "DustConfig", "GroundTruth", "MetaRanges", "ProfileConfig",
    "SimulatedFrame", "iter_frames", "simulate", "synthesize_dataset",
    "GROWTH_COEFFICIENTS", "DefectRecord", "DefectSampling", "SensorProfile",
    "defect_density", "defect_rate_per_day", "pixel_response", "sample_defect_timeline",
    "DustParticle", "dust_spot_diameter", "projected_position", "render_dust",
    "mosaic", "render_frame", "SceneConfig", "generate_scene",
]
