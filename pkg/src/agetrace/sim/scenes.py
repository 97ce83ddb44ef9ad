"""Scene illumination generators (float RGB, intensity units of the output)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .. import rng as rngs
from ..errors import InvalidArgument

SCENE_KINDS = ("flat", "gradient", "textured", "biased")

# orthonormal chroma directions, both perpendicular to the gray axis
_CHROMA_U = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
_CHROMA_V = np.array([1.0, 1.0, -2.0]) / np.sqrt(6.0)


@dataclass
class SceneConfig:
    """Scene content.

    ``biased`` gives each session its own palette color on a chroma circle
    of ``palette_radius`` around gray. With ``modes=2`` images of a session
    alternate between the palette color and its opposite, so the session's
    mean color is gray while single images stay distinctive.
    """

    kind: str = "flat"
    level: float = 100.0
    amplitude: float = 0.0
    smoothness: float = 4.0
    palette_seed: int = 0
    palette_radius: float = 40.0
    color_jitter: float = 0.0
    modes: int = 1
    n_palettes: int = 0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise InvalidArgument(f"scene kind must be one of {SCENE_KINDS}, got {self.kind!r}")
        if self.level < 0 or self.amplitude < 0 or self.color_jitter < 0:
            raise InvalidArgument("scene level, amplitude and jitter must be >= 0")
        if self.modes not in (1, 2):
            raise InvalidArgument("modes must be 1 or 2")

    def as_dict(self) -> dict:
        return dict(vars(self))


def palette_color(config: SceneConfig, session: int, n_sessions: int) -> np.ndarray:
    n = max(config.n_palettes or n_sessions, 1)
    phase = rngs.stream(config.palette_seed, "palette").uniform(0, 2 * np.pi)
    angle = phase + 2 * np.pi * (session % n) / n
    return config.level + config.palette_radius * (np.cos(angle) * _CHROMA_U + np.sin(angle) * _CHROMA_V)


def _texture(h: int, w: int, rng: np.random.Generator, smoothness: float) -> np.ndarray:
    noise = rng.standard_normal((h, w))
    if smoothness > 0:
        noise = ndimage.gaussian_filter(noise, smoothness, mode="reflect")
    std = noise.std()
    return noise / std if std > 0 else noise


def generate_scene(config: SceneConfig, height: int, width: int, session: int = 0,
                   image_index: int = 0, n_sessions: int = 1,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Float ``(height, width, 3)`` illumination for one image, clipped at 0."""
    rng = rng or np.random.default_rng(0)
    if config.kind == "flat":
        base = np.full((height, width, 3), config.level)
    elif config.kind == "gradient":
        ramp = np.linspace(config.level - config.amplitude, config.level + config.amplitude, width)
        base = np.broadcast_to(ramp[None, :, None], (height, width, 3)).copy()
    else:
        if config.kind == "biased":
            color = palette_color(config, session, n_sessions)
            if config.modes == 2 and image_index % 2:
                color = 2 * config.level - color
        else:
            color = np.full(3, config.level)
        color = color + rng.normal(0.0, config.color_jitter, 3) if config.color_jitter else color
        tex = _texture(height, width, rng, config.smoothness) * config.amplitude
        base = color[None, None, :] + tex[:, :, None]
    return np.clip(base, 0.0, None)
