"""Seeded synthetic tracking sequences with exact ground truth."""

# SPDX-License-Identifier: Apache-2.0

import logging
import math
from dataclasses import dataclass, field
from numbers import Integral
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from mdtracker.exceptions import ConfigurationError
from mdtracker.models.geometry import BoundingBox
from mdtracker.utils import check_in_range, check_positive, check_type


logger = logging.getLogger(__name__)


OCCLUDER_PADDING = 2


@dataclass
class SyntheticSequenceSpec:
    """A textured rectangle moving over a static background.

    The target bounces inside the image with constant `velocity` (pixels per
    frame) and its extents oscillate by `scale_amplitude` over
    `scale_period` frames. Distractors share the target's size; with
    `distractor_similarity` 1 they copy its texture. `occlusions` are 1-based
    inclusive frame ranges during which a constant-color block covers the
    target. Texture seeds default to values derived from `seed`; setting them
    explicitly lets several sequences share appearances.
    """

    width: int = 160
    height: int = 120
    num_frames: int = 30
    object_size: Tuple[int, int] = (32, 24)
    velocity: Tuple[float, float] = (1.5, 1.0)
    scale_amplitude: float = 0.0
    scale_period: float = 40.0
    num_distractors: int = 0
    distractor_similarity: float = 0.0
    illumination_amplitude: float = 0.0
    illumination_period: float = 50.0
    occlusions: Tuple[Tuple[int, int], ...] = ()
    occluder_color: Tuple[int, int, int] = (127, 127, 127)
    texture_cell: int = 4
    seed: int = 0
    target_texture_seed: Optional[int] = None
    distractor_texture_seed: Optional[int] = None

    def __post_init__(self):
        integers = (
            "width",
            "height",
            "num_frames",
            "num_distractors",
            "texture_cell",
            "seed",
        )
        for name in integers:
            check_type(name, getattr(self, name), Integral)
        if self.num_frames < 1:
            raise ConfigurationError(
                f"num_frames must be >= 1; received {self.num_frames}."
            )
        if self.num_distractors < 0 or self.texture_cell < 1:
            raise ConfigurationError(
                "num_distractors must be >= 0 and texture_cell >= 1."
            )
        for name in ("scale_amplitude", "illumination_amplitude"):
            check_in_range(name, getattr(self, name), 0.0, 1.0, include_high=False)
        check_in_range("distractor_similarity", self.distractor_similarity, 0.0, 1.0)
        check_positive("scale_period", self.scale_period)
        check_positive("illumination_period", self.illumination_period)

        self.object_size = tuple(int(v) for v in self.object_size)
        self.velocity = tuple(float(v) for v in self.velocity)
        self.occlusions = tuple((int(a), int(b)) for a, b in self.occlusions)
        self.occluder_color = tuple(int(v) for v in self.occluder_color)

        w, h = self.max_object_size
        if min(self.object_size) < 2:
            raise ConfigurationError(
                f"object_size must be >= 2 px; received {self.object_size}."
            )
        if w > self.width or h > self.height:
            raise ConfigurationError(
                f"The object (up to {w}x{h} px) does not fit in the "
                f"{self.width}x{self.height} image."
            )
        for start, end in self.occlusions:
            if not 1 <= start <= end:
                raise ConfigurationError(
                    f"Occlusion ranges are 1-based and inclusive; "
                    f"received ({start}, {end})."
                )
        if any(not 0 <= channel <= 255 for channel in self.occluder_color):
            raise ConfigurationError(f"Invalid occluder color {self.occluder_color}.")

    @property
    def max_object_size(self) -> Tuple[int, int]:
        w, h = self.object_size
        factor = 1.0 + self.scale_amplitude
        return int(math.ceil(w * factor)), int(math.ceil(h * factor))

    def is_occluded(self, t: int) -> bool:
        """Whether 1-based frame t falls inside an occlusion range."""
        return any(start <= t <= end for start, end in self.occlusions)


@dataclass
class SyntheticSequence:
    """Rendered frames (H x W x 3 uint8), ground truth and occlusion flags."""

    spec: SyntheticSequenceSpec
    frames: List[np.ndarray] = field(default_factory=list)
    groundtruth: List[BoundingBox] = field(default_factory=list)
    occluded: List[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)


def make_texture(
    size: Tuple[int, int], cell: int, rng: np.random.Generator
) -> np.ndarray:
    """A random color-block texture of `size` (w, h) with `cell`-pixel blocks."""
    w, h = size
    blocks = rng.integers(0, 256, size=(math.ceil(h / cell), math.ceil(w / cell), 3))
    texture = np.repeat(np.repeat(blocks, cell, axis=0), cell, axis=1)
    return texture[:h, :w].astype(np.uint8)


def _background(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """A smooth, mid-intensity background: a coarse random grid upsampled."""
    coarse = rng.integers(60, 141, size=(max(2, height // 16), max(2, width // 16), 3))
    image = Image.fromarray(coarse.astype(np.uint8)).resize(
        (width, height), Image.BILINEAR
    )
    return np.asarray(image, dtype=np.uint8)


def _resize(texture: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    if texture.shape[1] == size[0] and texture.shape[0] == size[1]:
        return texture
    return np.asarray(Image.fromarray(texture).resize(size, Image.NEAREST))


def _bounce(position: float, velocity: float, low: float, high: float):
    position += velocity
    if high <= low:
        return (low + high) / 2.0, velocity
    if position < low:
        position, velocity = 2 * low - position, -velocity
    elif position > high:
        position, velocity = 2 * high - position, -velocity
    return min(max(position, low), high), velocity


def _paste(frame: np.ndarray, texture: np.ndarray, x: int, y: int) -> None:
    height, width = frame.shape[:2]
    h, w = texture.shape[:2]
    left, top = max(x, 0), max(y, 0)
    right, bottom = min(x + w, width), min(y + h, height)
    if right > left and bottom > top:
        rows = slice(top - y, bottom - y)
        columns = slice(left - x, right - x)
        frame[top:bottom, left:right] = texture[rows, columns]


class _Mover(object):
    """Center position and velocity of a bouncing object."""

    def __init__(self, cx, cy, vx, vy, margin_x, margin_y, width, height):
        self.cx, self.cy, self.vx, self.vy = cx, cy, vx, vy
        self.bounds_x = (margin_x, width - margin_x)
        self.bounds_y = (margin_y, height - margin_y)

    def advance(self):
        self.cx, self.vx = _bounce(self.cx, self.vx, *self.bounds_x)
        self.cy, self.vy = _bounce(self.cy, self.vy, *self.bounds_y)


def generate_sequence(
    spec: SyntheticSequenceSpec, rng: Optional[np.random.Generator] = None
) -> SyntheticSequence:
    """Render a sequence; deterministic given `spec.seed` (or the given rng)."""
    check_type("spec", spec, SyntheticSequenceSpec)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    base_w, base_h = spec.object_size
    max_w, max_h = spec.max_object_size

    target_rng = (
        np.random.default_rng(spec.target_texture_seed)
        if spec.target_texture_seed is not None
        else rng
    )
    target_texture = make_texture((base_w, base_h), spec.texture_cell, target_rng)
    background = _background(spec.width, spec.height, rng)

    distractor_textures = []
    for _ in range(spec.num_distractors):
        if spec.distractor_texture_seed is not None:
            other = make_texture(
                (base_w, base_h),
                spec.texture_cell,
                np.random.default_rng(spec.distractor_texture_seed),
            )
        else:
            other = make_texture((base_w, base_h), spec.texture_cell, rng)
            mix = spec.distractor_similarity
            other = np.round(mix * target_texture + (1 - mix) * other).astype(np.uint8)
        distractor_textures.append(other)

    def mover(velocity: Tuple[float, float], w: int, h: int) -> _Mover:
        margin_x, margin_y = w / 2.0, h / 2.0
        cx = rng.uniform(margin_x, max(margin_x, spec.width - margin_x))
        cy = rng.uniform(margin_y, max(margin_y, spec.height - margin_y))
        vx, vy = velocity
        return _Mover(cx, cy, vx, vy, margin_x, margin_y, spec.width, spec.height)

    target = mover(spec.velocity, max_w, max_h)
    speed = max(1.0, math.hypot(*spec.velocity))
    distractors = [
        mover(tuple(rng.uniform(-speed, speed, 2)), base_w, base_h)
        for _ in range(spec.num_distractors)
    ]

    sequence = SyntheticSequence(spec)
    for index in range(spec.num_frames):
        t = index + 1
        if index:
            target.advance()
            for distractor in distractors:
                distractor.advance()

        frame = background.copy()
        for distractor, texture in zip(distractors, distractor_textures):
            _paste(
                frame,
                texture,
                int(round(distractor.cx - base_w / 2.0)),
                int(round(distractor.cy - base_h / 2.0)),
            )

        phase = 2 * math.pi * index / spec.scale_period
        factor = 1.0 + spec.scale_amplitude * math.sin(phase)
        w = max(2, int(round(base_w * factor)))
        h = max(2, int(round(base_h * factor)))
        x = int(round(target.cx - w / 2.0))
        y = int(round(target.cy - h / 2.0))
        x = min(max(x, 0), spec.width - w)
        y = min(max(y, 0), spec.height - h)
        _paste(frame, _resize(target_texture, (w, h)), x, y)

        if spec.illumination_amplitude:
            gain = 1.0 + spec.illumination_amplitude * math.sin(
                2 * math.pi * index / spec.illumination_period
            )
            frame = np.clip(np.round(frame * gain), 0, 255).astype(np.uint8)

        occluded = spec.is_occluded(t)
        if occluded:
            pad = OCCLUDER_PADDING
            left, top = max(x - pad, 0), max(y - pad, 0)
            right = min(x + w + pad, spec.width)
            bottom = min(y + h + pad, spec.height)
            frame[top:bottom, left:right] = spec.occluder_color

        sequence.frames.append(frame)
        sequence.groundtruth.append(BoundingBox(x, y, w, h))
        sequence.occluded.append(occluded)

    logger.debug(
        "Generated %d frames of %dx%d (seed %d).",
        spec.num_frames,
        spec.width,
        spec.height,
        spec.seed,
    )
    return sequence
