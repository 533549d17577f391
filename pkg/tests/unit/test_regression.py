"""Unit tests for bounding-box regression."""

# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from mdtracker.exceptions import ConfigurationError, InputError
from mdtracker.models.geometry import BoundingBox
from mdtracker.regression import (
    apply_regressor,
    decode_deltas,
    encode_deltas,
    fit_regressor,
    MAX_LOG_SCALE_DELTA,
    RegressorWeights,
    train_regressor,
)
from mdtracker.sampling import (
    draw_regression_samples,
    extract_patches,
    image_size_of,
)
from tests.utils import random_box, small_net, small_sequence


ITERATIONS_OF_RANDOM_TESTS = 100


# Happy path tests
def test_encode_known_deltas():
    deltas = encode_deltas(BoundingBox(15, 10, 20, 10), BoundingBox(10, 10, 10, 10))
    assert deltas[0] == pytest.approx([1.0, 0.0, np.log(2.0), 0.0])


def test_decode_inverts_encode():
    for _ in range(ITERATIONS_OF_RANDOM_TESTS):
        target, proposal = random_box(), random_box()
        decoded = decode_deltas(proposal, encode_deltas(target, proposal))
        assert decoded[0] == pytest.approx(target.to_array())


def test_decode_clips_extreme_scale_deltas():
    proposal = BoundingBox(0, 0, 10, 10)
    decoded = decode_deltas(proposal, np.array([0.0, 0.0, 50.0, -50.0]))
    assert decoded[0, 2] == pytest.approx(10 * np.exp(MAX_LOG_SCALE_DELTA))
    assert decoded[0, 3] == pytest.approx(10 * np.exp(-MAX_LOG_SCALE_DELTA))


def test_zero_regressor_leaves_boxes_unchanged():
    regressor = RegressorWeights.zeros(12)
    deltas = regressor.predict(np.random.default_rng(0).standard_normal((3, 12)))
    assert np.array_equal(deltas, np.zeros((3, 4)))


def test_fit_recovers_a_planted_linear_map():
    rng = np.random.default_rng(0)
    features = rng.standard_normal((500, 6))
    true_map = rng.standard_normal((6, 4))
    targets = features @ true_map + np.array([0.1, -0.2, 0.0, 0.3])
    regressor = fit_regressor(features, targets, lam=1e-6)
    assert np.allclose(regressor.predict(features), targets, atol=1e-4)


def test_constant_targets_predict_their_mean():
    rng = np.random.default_rng(1)
    features = rng.standard_normal((50, 8))
    targets = np.tile([0.5, -0.5, 0.1, 0.0], (50, 1))
    regressor = fit_regressor(features, targets, lam=10.0)
    assert np.allclose(regressor.predict(features[:3]), targets[:3])


def test_constant_features_are_tolerated():
    features = np.ones((10, 4))
    targets = np.random.default_rng(2).standard_normal((10, 4))
    regressor = fit_regressor(features, targets)
    assert np.all(np.isfinite(regressor.weights))
    assert np.allclose(regressor.predict(features[:1])[0], targets.mean(axis=0))


def test_stronger_ridge_shrinks_the_weights():
    rng = np.random.default_rng(3)
    features = rng.standard_normal((100, 5))
    targets = rng.standard_normal((100, 4))
    weak = fit_regressor(features, targets, lam=0.1)
    strong = fit_regressor(features, targets, lam=1000.0)
    assert np.linalg.norm(strong.weights) < np.linalg.norm(weak.weights)


def test_train_and_apply_on_a_frame():
    sequence = small_sequence(num_frames=1)
    frame, gt = sequence.frames[0], sequence.groundtruth[0]
    net = small_net()
    regressor = train_regressor(
        net, frame, gt, n_samples=80, rng=np.random.default_rng(0)
    )
    assert regressor.feature_dim == net.config.feature_dim
    refined = apply_regressor(regressor, net, frame, gt)
    assert isinstance(refined, BoundingBox)
    assert refined.w > 0 and refined.h > 0


def test_round_trip_is_exact_to_relative_precision():
    rng = np.random.default_rng(4)
    origins = rng.uniform(1.0, 100.0, size=(1000, 2))
    targets = np.hstack([origins, rng.uniform(4.0, 60.0, size=(1000, 2))])
    proposals = np.hstack(
        [origins + rng.normal(0.0, 5.0, size=(1000, 2)), targets[:, 2:] * 1.3]
    )
    decoded = decode_deltas(proposals, encode_deltas(targets, proposals))
    np.testing.assert_allclose(decoded, targets, rtol=1e-9, atol=0.0)


def test_fit_recovers_held_out_deltas():
    rng = np.random.default_rng(5)
    true_map = rng.standard_normal((8, 4))
    offset = np.array([0.1, -0.2, 0.05, 0.3])
    train = rng.standard_normal((400, 8))
    held_out = rng.standard_normal((100, 8))
    regressor = fit_regressor(train, train @ true_map + offset, lam=1e-9)
    np.testing.assert_allclose(
        regressor.predict(held_out), held_out @ true_map + offset, atol=1e-6
    )


def test_apply_regressor_lands_on_the_planted_target():
    sequence = small_sequence(num_frames=1)
    frame, gt = sequence.frames[0], sequence.groundtruth[0]
    net = small_net()
    rng = np.random.default_rng(6)
    proposals = draw_regression_samples(gt, 300, 0.6, rng, image_size_of(frame))
    features = net.conv3_features(extract_patches(frame, proposals))
    features = features.reshape(len(proposals), -1).astype(np.float64)

    # Deltas that are an exact linear function of the features.
    scale = 0.1 / np.sqrt(np.mean(np.sum(features ** 2, axis=1)))
    planted_map = rng.standard_normal((features.shape[1], 4)) * scale
    regressor = fit_regressor(features, features @ planted_map, lam=1e-8)

    for proposal in proposals[:5]:
        box = BoundingBox.from_array(proposal)
        feature = net.conv3_features(extract_patches(frame, [proposal]))
        feature = feature.reshape(1, -1).astype(np.float64)
        expected = decode_deltas(proposal, feature @ planted_map)[0]
        refined = apply_regressor(regressor, net, frame, box)
        assert np.max(np.abs(refined.to_array() - expected)) < 0.1


# Unhappy path tests
def test_feature_dimension_must_match():
    with pytest.raises(ConfigurationError):
        RegressorWeights.zeros(12).predict(np.zeros((1, 13)))


def test_fit_needs_matching_targets():
    with pytest.raises(InputError):
        fit_regressor(np.zeros((5, 3)), np.zeros((4, 4)))


def test_fit_needs_samples():
    with pytest.raises(InputError):
        fit_regressor(np.zeros((0, 3)), np.zeros((0, 4)))


def test_lambda_must_be_positive():
    with pytest.raises(ConfigurationError):
        fit_regressor(np.zeros((5, 3)), np.zeros((5, 4)), lam=0.0)
