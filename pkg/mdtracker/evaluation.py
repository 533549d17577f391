"""One-pass evaluation curves and a reinitializing evaluation harness."""

# SPDX-License-Identifier: Apache-2.0

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mdtracker.config import (
    PRECISION_MAX_THRESHOLD,
    REINIT_GAP,
    REPRESENTATIVE_PRECISION_THRESHOLD,
    SUCCESS_THRESHOLD_STEP,
)
from mdtracker.exceptions import InputError
from mdtracker.models.geometry import (
    as_box_array,
    BoundingBox,
    BoxLike,
    center_distances,
    iou,
    overlap_ratios,
)
from mdtracker.models.mdnet import MDNet
from mdtracker.tracker import OnlineTracker, TrackerConfig


logger = logging.getLogger(__name__)


def _paired(results: Sequence[BoxLike], groundtruth: Sequence[BoxLike]):
    if len(results) != len(groundtruth):
        raise InputError(
            f"Results ({len(results)} boxes) and ground truth ({len(groundtruth)} "
            f"boxes) differ in length."
        )
    if len(results) == 0:
        raise InputError("Cannot evaluate an empty trajectory.")
    return as_box_array(list(results)), as_box_array(list(groundtruth))


def precision_thresholds(max_threshold: int = PRECISION_MAX_THRESHOLD) -> np.ndarray:
    return np.arange(0, max_threshold + 1, dtype=np.float64)


def success_thresholds(step: float = SUCCESS_THRESHOLD_STEP) -> np.ndarray:
    return np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)


def precision_curve(
    results: Sequence[BoxLike],
    groundtruth: Sequence[BoxLike],
    max_threshold: int = PRECISION_MAX_THRESHOLD,
) -> np.ndarray:
    """Fraction of frames whose center error is <= each threshold (0..max px)."""
    results, groundtruth = _paired(results, groundtruth)
    errors = center_distances(results, groundtruth)
    thresholds = precision_thresholds(max_threshold)
    return (errors[None, :] <= thresholds[:, None]).mean(axis=1)


def success_curve_and_auc(
    results: Sequence[BoxLike],
    groundtruth: Sequence[BoxLike],
    step: float = SUCCESS_THRESHOLD_STEP,
) -> Tuple[np.ndarray, float]:
    """Fraction of frames with IoU > each overlap threshold, and its mean (AUC)."""
    results, groundtruth = _paired(results, groundtruth)
    overlaps = overlap_ratios(results, groundtruth)
    thresholds = success_thresholds(step)
    curve = (overlaps[None, :] > thresholds[:, None]).mean(axis=1)
    return curve, float(curve.mean())


@dataclass
class EvalCurves:
    """Precision and success curves with their summary numbers."""

    precision: np.ndarray
    success: np.ndarray
    auc: float
    representative_precision: float
    precision_thresholds: np.ndarray = field(default_factory=precision_thresholds)
    success_thresholds: np.ndarray = field(default_factory=success_thresholds)

    def summary_line(self) -> str:
        return (
            f"AUC={self.auc:.4f} "
            f"precision@{REPRESENTATIVE_PRECISION_THRESHOLD}="
            f"{self.representative_precision:.4f}"
        )


def evaluate(
    results: Sequence[BoxLike], groundtruth: Sequence[BoxLike]
) -> EvalCurves:
    """One-pass evaluation of a trajectory against its ground truth."""
    precision = precision_curve(results, groundtruth)
    success, auc = success_curve_and_auc(results, groundtruth)
    return EvalCurves(
        precision=precision,
        success=success,
        auc=auc,
        representative_precision=float(precision[REPRESENTATIVE_PRECISION_THRESHOLD]),
    )


def write_curve_csv(
    path: Union[str, Path], thresholds: Sequence[float], values: Sequence[float]
) -> Path:
    """Write `threshold,value` lines."""
    path = Path(path)
    with path.open("w") as file:
        for threshold, value in zip(thresholds, values):
            file.write(f"{threshold:g},{value:.6f}\n")
    return path


@dataclass
class ReinitResult:
    """Accuracy (mean IoU over tracked frames) and robustness (failure count).

    `boxes` has one entry per frame; frames skipped after a failure are None.
    """

    accuracy: float
    failures: int
    boxes: List[Optional[BoundingBox]]
    restarts: List[int] = field(default_factory=list)


def run_with_reinitialization(
    net: MDNet,
    frames: Sequence,
    groundtruth: Sequence[BoundingBox],
    cfg: Optional[TrackerConfig] = None,
    rng: Optional[np.random.Generator] = None,
    gap: int = REINIT_GAP,
) -> ReinitResult:
    """Track with restarts: a zero-overlap frame counts as a failure and the
    tracker is re-initialized from the ground truth `gap` frames later.
    """
    if len(frames) != len(groundtruth) or not frames:
        raise InputError(
            "Frames and ground truth must be non-empty and equal in length."
        )
    rng = rng if rng is not None else np.random.default_rng()

    boxes: List[Optional[BoundingBox]] = [None] * len(frames)
    overlaps = []
    failures = 0
    restarts = []
    start = 0
    while start < len(frames):
        restarts.append(start + 1)
        tracker = OnlineTracker(net, cfg, rng)
        tracker.initialize(frames[start], groundtruth[start])
        boxes[start] = groundtruth[start]

        failed_at = None
        for offset, index in enumerate(range(start + 1, len(frames)), start=2):
            box = tracker.step(frames[index], offset).box
            boxes[index] = box
            overlap = iou(box, groundtruth[index])
            if overlap <= 0.0:
                failed_at = index
                break
            overlaps.append(overlap)

        if failed_at is None:
            break
        failures += 1
        logger.info(
            "Tracking failure at frame %d; restarting %d frames later.",
            failed_at + 1,
            gap,
        )
        start = failed_at + gap

    accuracy = float(np.mean(overlaps)) if overlaps else 0.0
    return ReinitResult(accuracy, failures, boxes, restarts)
