"""Candidate generation, IoU-constrained sample drawing and patch extraction."""

# SPDX-License-Identifier: Apache-2.0

import logging
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from mdtracker.config import (
    INPUT_SIZE,
    NEG_TRANS_STD,
    PATCH_BATCH_SIZE,
    PATCH_MEAN,
    PIXEL_SCALE,
    POS_TRANS_STD,
    PROPOSAL_SCALE_STD,
    REGRESSION_SCALE_STD,
    REGRESSION_TRANS_STD,
    SAMPLING_RETRY_FACTOR,
)
from mdtracker.exceptions import ConfigurationError, InputError, SamplingExhaustedError
from mdtracker.models.geometry import (
    as_box_array,
    BoundingBox,
    BoxLike,
    CandidateGenConfig,
    overlap_ratios,
    TargetState,
)
from mdtracker.utils import check_in_range, check_positive


logger = logging.getLogger(__name__)


ImageSize = Tuple[int, int]  # (width, height)


class TrainingSamples(NamedTuple):
    """Positive and negative sample boxes as (N, 4) x, y, w, h arrays."""

    positives: np.ndarray
    negatives: np.ndarray


# Candidates
class CandidateArray(NamedTuple):
    """N candidate states around a previous state, as parallel arrays."""

    centers: np.ndarray  # (N, 2) cx, cy
    scales: np.ndarray  # (N,) scale exponents
    base_w: float
    base_h: float
    scale_base: float

    def __len__(self) -> int:
        return len(self.scales)

    @property
    def boxes(self) -> np.ndarray:
        """(N, 4) x, y, w, h boxes of every candidate."""
        factor = self.scale_base ** self.scales
        w = self.base_w * factor
        h = self.base_h * factor
        return np.stack(
            [self.centers[:, 0] - w / 2.0, self.centers[:, 1] - h / 2.0, w, h], axis=1
        )

    def state(self, index: int) -> TargetState:
        cx, cy = self.centers[index]
        return TargetState(
            float(cx),
            float(cy),
            float(self.scales[index]),
            self.base_w,
            self.base_h,
            scale_base=self.scale_base,
        )

    def states(self) -> List[TargetState]:
        return [self.state(index) for index in range(len(self))]


def draw_candidate_array(
    prev: TargetState,
    cfg: Optional[CandidateGenConfig] = None,
    rng: Optional[np.random.Generator] = None,
    search_expansion: float = 1.0,
) -> CandidateArray:
    """Gaussian draws of (cx, cy, s) around `prev`, as arrays.

    Translation std is sqrt(trans_var_coeff) * r * search_expansion with r the
    mean of the previous box's width and height; the scale exponent std is
    sqrt(scale_var).
    """
    cfg = cfg if cfg is not None else CandidateGenConfig()
    rng = rng if rng is not None else np.random.default_rng()
    check_positive("search_expansion", search_expansion)
    prev_box = prev.box
    r = prev_box.mean_extent

    trans_std = np.sqrt(cfg.trans_var_coeff) * r * search_expansion
    scale_std = np.sqrt(cfg.scale_var)
    n = cfg.num_candidates
    centers = np.stack(
        [rng.normal(prev.cx, trans_std, n), rng.normal(prev.cy, trans_std, n)], axis=1
    )
    scales = rng.normal(prev.s, scale_std, n)
    return CandidateArray(centers, scales, prev.base_w, prev.base_h, cfg.scale_base)


def draw_candidates(
    prev: TargetState,
    cfg: Optional[CandidateGenConfig] = None,
    rng: Optional[np.random.Generator] = None,
    search_expansion: float = 1.0,
) -> List[TargetState]:
    """N candidate TargetStates drawn around `prev`."""
    return draw_candidate_array(prev, cfg, rng, search_expansion).states()


# Training samples
def _check_image_size(image_size: ImageSize) -> Tuple[int, int]:
    width, height = (int(v) for v in image_size)
    if width < 1 or height < 1:
        raise InputError(f"Image size must be positive; received {image_size!r}.")
    return width, height


def _jitter(
    gt: np.ndarray,
    count: int,
    trans_std: float,
    scale_std: float,
    rng: np.random.Generator,
    independent_aspect: bool = False,
) -> np.ndarray:
    """Gaussian perturbations of one box: translation in units of r, log-scale."""
    x, y, w, h = gt
    r = (w + h) / 2.0
    cx = x + w / 2.0 + rng.normal(0.0, trans_std * r, count)
    cy = y + h / 2.0 + rng.normal(0.0, trans_std * r, count)
    scale_w = np.exp(rng.normal(0.0, scale_std, count))
    scale_h = scale_w
    if independent_aspect:
        scale_h = np.exp(rng.normal(0.0, scale_std, count))
    return np.stack([cx, cy, w * scale_w, h * scale_h], axis=1)


def _uniform(gt: np.ndarray, count: int, image_size: ImageSize, rng) -> np.ndarray:
    width, height = image_size
    _, _, w, h = gt
    scale = np.exp(rng.normal(0.0, PROPOSAL_SCALE_STD, count))
    return np.stack(
        [
            rng.uniform(0.0, width, count),
            rng.uniform(0.0, height, count),
            w * scale,
            h * scale,
        ],
        axis=1,
    )


def _to_boxes(centered: np.ndarray, image_size: ImageSize) -> np.ndarray:
    """Center-form proposals to x, y, w, h boxes with centers clamped to the image."""
    width, height = image_size
    cx = np.clip(centered[:, 0], 0.0, width)
    cy = np.clip(centered[:, 1], 0.0, height)
    w = centered[:, 2]
    h = centered[:, 3]
    return np.stack([cx - w / 2.0, cy - h / 2.0, w, h], axis=1)


def _rejection_sample(
    propose: Callable[[int], np.ndarray],
    accept: Callable[[np.ndarray], np.ndarray],
    count: int,
    constraint: str,
) -> np.ndarray:
    """Draw proposals in rounds until `count` are accepted or the budget runs out."""
    if count == 0:
        return np.zeros((0, 4), dtype=np.float64)
    budget = SAMPLING_RETRY_FACTOR * count
    round_size = max(4 * count, 64)
    accepted = []
    found = 0
    proposed = 0
    while found < count:
        if proposed >= budget:
            raise SamplingExhaustedError(
                constraint=constraint, found=found, requested=count
            )
        size = min(round_size, budget - proposed)
        proposals = propose(size)
        proposed += size
        keep = proposals[accept(proposals)]
        accepted.append(keep)
        found += len(keep)
    return np.concatenate(accepted)[:count]


def draw_positive_samples(
    gt: BoxLike,
    count: int,
    pos_thresh: float,
    rng: np.random.Generator,
    image_size: ImageSize,
    trans_std: float = POS_TRANS_STD,
    scale_std: float = PROPOSAL_SCALE_STD,
) -> np.ndarray:
    """`count` boxes with IoU >= pos_thresh against `gt`.

    A threshold of 1.0 admits only `gt` itself and returns `count` copies of
    it. Below that, every proposal round starts with `gt`.
    """
    check_in_range("pos_thresh", pos_thresh, 0.0, 1.0, include_low=False)
    image_size = _check_image_size(image_size)
    reference = as_box_array(gt)[0]
    if pos_thresh >= 1.0:
        return np.tile(reference, (count, 1))

    def propose(size: int) -> np.ndarray:
        jittered = _jitter(reference, size, trans_std, scale_std, rng)
        boxes = _to_boxes(jittered, image_size)
        boxes[0] = reference
        return boxes

    def accept(boxes: np.ndarray) -> np.ndarray:
        return overlap_ratios(boxes, reference) >= pos_thresh

    return _rejection_sample(propose, accept, count, f"iou >= {pos_thresh}")


def draw_negative_samples(
    gt: BoxLike,
    count: int,
    neg_thresh: float,
    rng: np.random.Generator,
    image_size: ImageSize,
    trans_std: float = NEG_TRANS_STD,
    scale_std: float = PROPOSAL_SCALE_STD,
) -> np.ndarray:
    """`count` boxes with IoU <= neg_thresh against `gt`.

    Half the proposals perturb `gt` with a wide translation; the other half
    are placed uniformly over the image.
    """
    check_in_range("neg_thresh", neg_thresh, 0.0, 1.0, include_high=False)
    image_size = _check_image_size(image_size)
    reference = as_box_array(gt)[0]

    def propose(size: int) -> np.ndarray:
        near = size // 2
        centered = np.concatenate(
            [
                _jitter(reference, near, trans_std, scale_std, rng),
                _uniform(reference, size - near, image_size, rng),
            ]
        )
        return _to_boxes(centered, image_size)

    def accept(boxes: np.ndarray) -> np.ndarray:
        return overlap_ratios(boxes, reference) <= neg_thresh

    return _rejection_sample(propose, accept, count, f"iou <= {neg_thresh}")


def draw_training_samples(
    gt: BoxLike,
    n_pos: int,
    n_neg: int,
    pos_thresh: float,
    neg_thresh: float,
    rng: np.random.Generator,
    image_size: ImageSize,
) -> TrainingSamples:
    """Exactly n_pos positives (IoU >= pos_thresh) and n_neg negatives (<= neg_thresh).

    Raises:
        SamplingExhaustedError: if either quota is not met within
            SAMPLING_RETRY_FACTOR proposals per requested sample.
    """
    if n_pos < 0 or n_neg < 0:
        raise ConfigurationError(
            f"Sample counts must be non-negative; received {n_pos}, {n_neg}."
        )
    if pos_thresh <= neg_thresh:
        raise ConfigurationError(
            f"pos_thresh ({pos_thresh}) must exceed neg_thresh ({neg_thresh})."
        )
    positives = draw_positive_samples(gt, n_pos, pos_thresh, rng, image_size)
    negatives = draw_negative_samples(gt, n_neg, neg_thresh, rng, image_size)
    return TrainingSamples(positives, negatives)


def draw_regression_samples(
    gt: BoxLike,
    count: int,
    min_iou: float,
    rng: np.random.Generator,
    image_size: ImageSize,
) -> np.ndarray:
    """Boxes near `gt` with IoU >= min_iou and independently jittered extents."""
    check_in_range("min_iou", min_iou, 0.0, 1.0, include_low=False, include_high=False)
    image_size = _check_image_size(image_size)
    reference = as_box_array(gt)[0]

    def propose(size: int) -> np.ndarray:
        centered = _jitter(
            reference,
            size,
            REGRESSION_TRANS_STD,
            REGRESSION_SCALE_STD,
            rng,
            independent_aspect=True,
        )
        return _to_boxes(centered, image_size)

    def accept(boxes: np.ndarray) -> np.ndarray:
        return overlap_ratios(boxes, reference) >= min_iou

    return _rejection_sample(propose, accept, count, f"iou >= {min_iou}")


# Patches
def as_image(image) -> np.ndarray:
    """An H x W x 3 float32 array from an array or PIL image."""
    array = np.asarray(image)
    if array.size == 0:
        raise InputError("Cannot extract patches from an empty image.")
    if array.ndim == 2:
        array = np.repeat(array[:, :, None], 3, axis=2)
    if array.ndim != 3 or array.shape[2] not in (3, 4):
        raise InputError(f"Expected an H x W x 3 image; received shape {array.shape}.")
    return array[:, :, :3].astype(np.float32, copy=False)


def image_size_of(image) -> ImageSize:
    """(width, height) of an array or PIL image."""
    shape = np.shape(image)
    if len(shape) < 2 or shape[0] == 0 or shape[1] == 0:
        raise InputError(f"Image has no pixels; shape {shape}.")
    return shape[1], shape[0]


def _sample_grid(start: np.ndarray, extent: np.ndarray, size: int, limit: int):
    """Bilinear source coordinates for `size` output pixels across each box."""
    offsets = (np.arange(size, dtype=np.float64) + 0.5) / size
    coords = start[:, None] + offsets[None, :] * extent[:, None] - 0.5
    coords = np.clip(coords, 0.0, limit - 1)
    low = np.floor(coords).astype(np.int64)
    high = np.minimum(low + 1, limit - 1)
    weight = (coords - low).astype(np.float32)
    return low, high, weight


def extract_patches(
    image,
    boxes: Union[BoxLike, Sequence[BoxLike]],
    size: int = INPUT_SIZE,
    batch_size: int = PATCH_BATCH_SIZE,
) -> np.ndarray:
    """Bilinearly resample each box to size x size, normalized, as (N, 3, S, S).

    Pixel centers of the output grid map to evenly spaced points inside the
    box; coordinates outside the image clamp to the edge pixels. Values are
    mapped to [0, 1] and shifted by -PATCH_MEAN.
    """
    pixels = as_image(image)
    height, width = pixels.shape[:2]
    boxes = as_box_array(boxes)
    if np.any(boxes[:, 2] <= 0) or np.any(boxes[:, 3] <= 0):
        raise InputError("Boxes must have positive extents.")

    patches = np.empty((len(boxes), 3, size, size), dtype=np.float32)
    for start in range(0, len(boxes), batch_size):
        chunk = boxes[start : start + batch_size]
        x0, x1, fx = _sample_grid(chunk[:, 0], chunk[:, 2], size, width)
        y0, y1, fy = _sample_grid(chunk[:, 1], chunk[:, 3], size, height)

        def gather(rows, cols):
            return pixels[rows[:, :, None], cols[:, None, :]]

        fx = fx[:, None, :, None]
        fy = fy[:, :, None, None]
        top = gather(y0, x0) * (1 - fx) + gather(y0, x1) * fx
        bottom = gather(y1, x0) * (1 - fx) + gather(y1, x1) * fx
        values = top * (1 - fy) + bottom * fy
        patches[start : start + len(chunk)] = values.transpose(0, 3, 1, 2)

    patches /= np.float32(PIXEL_SCALE)
    patches -= np.float32(PATCH_MEAN)
    return patches


def extract_patch(image, box: BoxLike, size: int = INPUT_SIZE) -> np.ndarray:
    """One normalized 3 x size x size patch."""
    if isinstance(box, BoundingBox):
        box = box.to_array()
    return extract_patches(image, [box], size=size)[0]
