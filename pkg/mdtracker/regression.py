"""Linear bounding-box regression from conv3 features to box deltas."""

# SPDX-License-Identifier: Apache-2.0

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mdtracker.config import REGRESSION_LAMBDA, REGRESSION_MIN_IOU, REGRESSION_SAMPLES
from mdtracker.exceptions import ConfigurationError, InputError
from mdtracker.models.geometry import as_box_array, BoundingBox, BoxLike
from mdtracker.models.mdnet import MDNet
from mdtracker.sampling import draw_regression_samples, extract_patches, image_size_of
from mdtracker.utils import check_positive


logger = logging.getLogger(__name__)


# Largest log-scale correction applied when decoding, as in R-CNN style heads.
MAX_LOG_SCALE_DELTA = math.log(1000.0 / 16.0)


@dataclass(frozen=True, eq=False)
class RegressorWeights:
    """A ridge regressor per delta (dx, dy, dw, dh) over standardized features.

    `weights` is D x 4, `bias` has 4 entries; features are standardized with
    the stored `feature_mean` / `feature_std` before the linear map.
    """

    weights: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    lam: float

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(
        cls, feature_dim: int, lam: float = REGRESSION_LAMBDA
    ) -> "RegressorWeights":
        """A regressor that predicts zero deltas (leaves boxes unchanged)."""
        return cls(
            weights=np.zeros((feature_dim, 4)),
            bias=np.zeros(4),
            feature_mean=np.zeros(feature_dim),
            feature_std=np.ones(feature_dim),
            lam=lam,
        )

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Deltas (N x 4) for flattened or N x C x H x W features."""
        features = np.asarray(features, dtype=np.float64)
        features = features.reshape(len(features), -1)
        if features.shape[1] != self.feature_dim:
            raise ConfigurationError(
                f"Regressor expects {self.feature_dim} features; "
                f"received {features.shape[1]}."
            )
        standardized = (features - self.feature_mean) / self.feature_std
        return standardized @ self.weights + self.bias


def encode_deltas(targets: BoxLike, proposals: BoxLike) -> np.ndarray:
    """Normalized center/extent corrections taking `proposals` onto `targets`.

    dx = (gx - px) / pw, dy = (gy - py) / ph, dw = ln(gw / pw), dh = ln(gh / ph)
    with (gx, gy) and (px, py) box centers.
    """
    g = as_box_array(targets)
    p = as_box_array(proposals)
    gx, gy = g[:, 0] + g[:, 2] / 2.0, g[:, 1] + g[:, 3] / 2.0
    px, py = p[:, 0] + p[:, 2] / 2.0, p[:, 1] + p[:, 3] / 2.0
    return np.stack(
        [
            (gx - px) / p[:, 2],
            (gy - py) / p[:, 3],
            np.log(g[:, 2] / p[:, 2]),
            np.log(g[:, 3] / p[:, 3]),
        ],
        axis=1,
    )


def decode_deltas(proposals: BoxLike, deltas: np.ndarray) -> np.ndarray:
    """Apply deltas to proposals; the inverse of `encode_deltas`."""
    p = as_box_array(proposals)
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    px, py = p[:, 0] + p[:, 2] / 2.0, p[:, 1] + p[:, 3] / 2.0
    cx = px + p[:, 2] * deltas[:, 0]
    cy = py + p[:, 3] * deltas[:, 1]
    log_scale = np.clip(deltas[:, 2:], -MAX_LOG_SCALE_DELTA, MAX_LOG_SCALE_DELTA)
    w = p[:, 2] * np.exp(log_scale[:, 0])
    h = p[:, 3] * np.exp(log_scale[:, 1])
    return np.stack([cx - w / 2.0, cy - h / 2.0, w, h], axis=1)


def fit_regressor(
    features: np.ndarray, targets: np.ndarray, lam: float = REGRESSION_LAMBDA
) -> RegressorWeights:
    """Closed-form ridge regression of `targets` (N x 4) on standardized features."""
    check_positive("lam", lam)
    features = np.asarray(features, dtype=np.float64)
    features = features.reshape(len(features), -1)
    targets = np.asarray(targets, dtype=np.float64)
    if len(features) == 0 or targets.shape != (len(features), 4):
        raise InputError(
            f"Expected N x D features and N x 4 targets with N >= 1; received "
            f"{features.shape} and {targets.shape}."
        )

    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    x = (features - mean) / std
    y_mean = targets.mean(axis=0)

    gram = x.T @ x + lam * np.eye(x.shape[1])
    weights = np.linalg.solve(gram, x.T @ (targets - y_mean))
    return RegressorWeights(
        weights=weights, bias=y_mean, feature_mean=mean, feature_std=std, lam=float(lam)
    )


def train_regressor(
    net: MDNet,
    frame,
    gt: BoundingBox,
    n_samples: int = REGRESSION_SAMPLES,
    lam: float = REGRESSION_LAMBDA,
    rng: Optional[np.random.Generator] = None,
    min_iou: float = REGRESSION_MIN_IOU,
) -> RegressorWeights:
    """Fit the first-frame regressor on boxes drawn near `gt` (IoU >= min_iou)."""
    rng = rng if rng is not None else np.random.default_rng()
    proposals = draw_regression_samples(
        gt, n_samples, min_iou, rng, image_size_of(frame)
    )
    features = net.conv3_features(extract_patches(frame, proposals))
    regressor = fit_regressor(features, encode_deltas(gt, proposals), lam)
    logger.info(
        "Trained box regressor on %d samples (feature dim %d, lambda %g).",
        len(proposals),
        regressor.feature_dim,
        lam,
    )
    return regressor


def refine_boxes(
    regressor: RegressorWeights, features: np.ndarray, boxes: BoxLike
) -> np.ndarray:
    """Boxes moved by the deltas the regressor predicts from their features."""
    return decode_deltas(boxes, regressor.predict(features))


def apply_regressor(
    regressor: RegressorWeights, net: MDNet, frame, box: BoundingBox
) -> BoundingBox:
    """Adjust one box using the conv3 feature of its patch."""
    features = net.conv3_features(extract_patches(frame, [box.to_array()]))
    return BoundingBox.from_array(refine_boxes(regressor, features, box)[0])
