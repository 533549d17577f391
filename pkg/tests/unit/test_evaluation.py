"""Unit tests for the evaluation curves and the reinitializing harness."""

# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from mdtracker.evaluation import (
    evaluate,
    precision_curve,
    precision_thresholds,
    run_with_reinitialization,
    success_curve_and_auc,
    success_thresholds,
    write_curve_csv,
)
from mdtracker.exceptions import InputError
from mdtracker.models.geometry import BoundingBox
from tests.utils import fast_tracker_config, random_boxes, small_net, small_sequence


ITERATIONS_OF_RANDOM_TESTS = 20


# Helper functions
def shifted(boxes, dx: float):
    return [box.translate(dx, 0.0) for box in boxes]


# Happy path tests
def test_thresholds():
    assert precision_thresholds().tolist() == list(range(51))
    thresholds = success_thresholds()
    assert len(thresholds) == 21
    assert thresholds[0] == 0.0 and thresholds[-1] == 1.0


def test_perfect_trajectory():
    boxes = random_boxes(10)
    curves = evaluate(boxes, boxes)
    assert curves.auc == pytest.approx(20.0 / 21.0)
    assert curves.representative_precision == 1.0
    assert np.all(curves.precision == 1.0)
    assert curves.success[-1] == 0.0


def test_disjoint_trajectory():
    groundtruth = [BoundingBox(0, 0, 10, 10)] * 4
    results = [BoundingBox(100, 100, 10, 10)] * 4
    curves = evaluate(results, groundtruth)
    assert curves.auc == 0.0
    assert curves.representative_precision == 0.0


def test_precision_at_known_errors():
    groundtruth = [BoundingBox(0, 0, 10, 10)] * 4
    results = shifted(groundtruth[:2], 5.0) + shifted(groundtruth[2:], 30.0)
    curve = precision_curve(results, groundtruth)
    assert curve[4] == 0.0
    assert curve[5] == 0.5
    assert curve[29] == 0.5
    assert curve[30] == 1.0


def test_success_counts_strictly_greater_overlaps():
    groundtruth = [BoundingBox(0, 0, 10, 10)]
    # IoU of exactly one half.
    results = [BoundingBox(0, 0, 5, 10)]
    curve, auc = success_curve_and_auc(results, groundtruth)
    assert curve[9] == 1.0  # threshold 0.45
    assert curve[10] == 0.0  # threshold 0.5
    assert auc == pytest.approx(10.0 / 21.0)


def test_curves_are_monotone():
    for _ in range(ITERATIONS_OF_RANDOM_TESTS):
        groundtruth = random_boxes(15)
        results = random_boxes(15)
        curves = evaluate(results, groundtruth)
        assert np.all(np.diff(curves.precision) >= 0)
        assert np.all(np.diff(curves.success) <= 0)
        assert 0.0 <= curves.auc <= 1.0


def test_summary_line():
    boxes = random_boxes(3)
    assert evaluate(boxes, boxes).summary_line() == "AUC=0.9524 precision@20=1.0000"


def test_write_curve_csv(tmp_path):
    path = write_curve_csv(tmp_path / "curve.csv", [0.0, 0.5], [1.0, 0.25])
    assert path.read_text().splitlines() == ["0,1.000000", "0.5,0.250000"]


@pytest.mark.slow
def test_reinitialization_covers_the_whole_sequence():
    sequence = small_sequence(num_frames=8)
    result = run_with_reinitialization(
        small_net(),
        sequence.frames,
        sequence.groundtruth,
        fast_tracker_config(),
        np.random.default_rng(0),
    )
    assert len(result.boxes) == 8
    assert result.restarts[0] == 1
    assert result.failures >= len(result.restarts) - 1
    assert 0.0 <= result.accuracy <= 1.0
    assert result.boxes[0] == sequence.groundtruth[0]


# Unhappy path tests
def test_lengths_must_match():
    with pytest.raises(InputError):
        evaluate(random_boxes(3), random_boxes(4))


def test_empty_trajectories_are_rejected():
    with pytest.raises(InputError):
        evaluate([], [])


def test_reinitialization_needs_frames():
    with pytest.raises(InputError):
        run_with_reinitialization(small_net(), [], [])
