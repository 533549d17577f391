"""Tests utility functions and classes."""

# SPDX-License-Identifier: Apache-2.0

import random
from typing import List, Tuple

import numpy as np

from mdtracker.models.geometry import BoundingBox
from mdtracker.models.mdnet import MDNet, MDNetConfig
from mdtracker.synthetic import (
    generate_sequence,
    SyntheticSequence,
    SyntheticSequenceSpec,
)
from mdtracker.tracker import TrackerConfig


FRAME_WIDTH = 160
FRAME_HEIGHT = 120

MIN_BOX_EXTENT = 4.0
MAX_BOX_EXTENT = 60.0


def random_box(
    width: int = FRAME_WIDTH,
    height: int = FRAME_HEIGHT,
    min_extent: float = MIN_BOX_EXTENT,
    max_extent: float = MAX_BOX_EXTENT,
) -> BoundingBox:
    """A random box lying entirely inside a width x height image."""
    assert min_extent <= max_extent
    w = random.uniform(min_extent, min(max_extent, width - 1))
    h = random.uniform(min_extent, min(max_extent, height - 1))
    x = random.uniform(0, width - w)
    y = random.uniform(0, height - h)
    return BoundingBox(x, y, w, h)


def random_boxes(count: int, **kwargs) -> List[BoundingBox]:
    return [random_box(**kwargs) for _ in range(count)]


def random_frame(
    width: int = FRAME_WIDTH,
    height: int = FRAME_HEIGHT,
    seed: int = 0,
) -> np.ndarray:
    """A uint8 H x W x 3 noise image."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(height, width, 3)).astype(np.uint8)


def constant_frame(
    value: Tuple[int, int, int],
    width: int = FRAME_WIDTH,
    height: int = FRAME_HEIGHT,
) -> np.ndarray:
    frame = np.empty((height, width, 3), dtype=np.uint8)
    frame[:, :] = value
    return frame


def small_net(num_domains: int = 1, seed: int = 0, **overrides) -> MDNet:
    """A desk-scale network with fan-in initialization (trains quickly)."""
    options = dict(init_scheme="fan_in")
    options.update(overrides)
    config = MDNetConfig.desk(num_domains=num_domains, **options)
    return MDNet(config, np.random.default_rng(seed))


def small_sequence(
    num_frames: int = 8, seed: int = 0, **overrides
) -> SyntheticSequence:
    """A short synthetic sequence with a slowly moving target."""
    options = dict(
        width=FRAME_WIDTH,
        height=FRAME_HEIGHT,
        num_frames=num_frames,
        object_size=(32, 24),
        velocity=(1.0, 0.5),
        seed=seed,
    )
    options.update(overrides)
    return generate_sequence(SyntheticSequenceSpec(**options))


def fast_tracker_config(**overrides) -> TrackerConfig:
    """Reduced sample counts and iterations so online tracking runs in seconds."""
    options = dict(
        num_candidates=64,
        init_iters=5,
        update_iters=2,
        m_plus=8,
        m_hard=16,
        m_neg_pool=64,
        first_frame_pos=50,
        first_frame_neg=200,
        frame_pos=10,
        frame_neg=40,
        regression_samples=60,
        regression_lambda=10.0,
    )
    options.update(overrides)
    return TrackerConfig(**options)


def split_sequence(
    sequence: SyntheticSequence, count: int
) -> Tuple[SyntheticSequence, SyntheticSequence]:
    """The first `count` frames and the rest, as two sequences."""
    head = SyntheticSequence(
        sequence.spec,
        sequence.frames[:count],
        sequence.groundtruth[:count],
        sequence.occluded[:count],
    )
    tail = SyntheticSequence(
        sequence.spec,
        sequence.frames[count:],
        sequence.groundtruth[count:],
        sequence.occluded[count:],
    )
    return head, tail
