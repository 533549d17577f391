"""Model bounding boxes and target states as native Python objects."""

# SPDX-License-Identifier: Apache-2.0

import math
from dataclasses import dataclass
from numbers import Integral, Real
from typing import Iterator, Sequence, Tuple, Union

import numpy as np

from mdtracker.config import NUM_CANDIDATES, SCALE_BASE, SCALE_VAR, TRANS_VAR_COEFF
from mdtracker.exceptions import ConfigurationError, InputError
from mdtracker.utils import check_positive, check_type


BoxLike = Union["BoundingBox", Sequence[float], np.ndarray]


class BoundingBox(object):
    """Axis-aligned box: top-left corner plus extents, in continuous pixels.

    Boxes may extend beyond the image; patch extraction clamps to the edges.
    """

    __slots__ = ["_x", "_y", "_w", "_h"]

    _x: float
    _y: float
    _w: float
    _h: float

    def __init__(self, x: Real, y: Real, w: Real, h: Real) -> None:
        check_type("x", x, Real)
        check_type("y", y, Real)
        check_type("w", w, Real)
        check_type("h", h, Real)
        if not all(math.isfinite(value) for value in (x, y, w, h)):
            raise InputError(
                f"Box coordinates must be finite; received {(x, y, w, h)}."
            )
        if w <= 0 or h <= 0:
            raise InputError(f"Box extents must be positive; received w={w}, h={h}.")

        self._x = float(x)
        self._y = float(y)
        self._w = float(w)
        self._h = float(h)

    @classmethod
    def from_center(cls, cx: Real, cy: Real, w: Real, h: Real) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "BoundingBox":
        x, y, w, h = (float(value) for value in values)
        return cls(x, y, w, h)

    @property
    def x(self) -> float:
        """Left edge."""
        return self._x

    @property
    def y(self) -> float:
        """Top edge."""
        return self._y

    @property
    def w(self) -> float:
        return self._w

    @property
    def h(self) -> float:
        return self._h

    @property
    def center(self) -> Tuple[float, float]:
        return self._x + self._w / 2.0, self._y + self._h / 2.0

    @property
    def area(self) -> float:
        return self._w * self._h

    @property
    def mean_extent(self) -> float:
        """r: the mean of the box width and height."""
        return (self._w + self._h) / 2.0

    def to_array(self) -> np.ndarray:
        return np.array([self._x, self._y, self._w, self._h], dtype=np.float64)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self._x + dx, self._y + dy, self._w, self._h)

    def __iter__(self) -> Iterator[float]:
        return iter((self._x, self._y, self._w, self._h))

    def __repr__(self) -> str:
        """An executable string representation of this object."""
        return (
            f"{self.__class__.__name__}("
            f"{self._x!r}, {self._y!r}, {self._w!r}, {self._h!r}"
            f")"
        )

    def __str__(self) -> str:
        return f"{self._x:.2f},{self._y:.2f},{self._w:.2f},{self._h:.2f}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoundingBox):
            return NotImplemented
        return tuple(self) == tuple(other)

    def __hash__(self) -> int:
        return hash(tuple(self))


class TargetState(object):
    """Translation-plus-scale state (cx, cy, s) of a candidate.

    The box extents are the first-frame extents times `scale_base ** s`, so
    the aspect ratio never changes during tracking.
    """

    __slots__ = ["_cx", "_cy", "_s", "_base_w", "_base_h", "_scale_base"]

    def __init__(
        self,
        cx: Real,
        cy: Real,
        s: Real,
        base_w: Real,
        base_h: Real,
        scale_base: Real = SCALE_BASE,
    ) -> None:
        check_type("cx", cx, Real)
        check_type("cy", cy, Real)
        check_type("s", s, Real)
        check_positive("base_w", base_w)
        check_positive("base_h", base_h)
        check_positive("scale_base", scale_base)

        self._cx = float(cx)
        self._cy = float(cy)
        self._s = float(s)
        self._base_w = float(base_w)
        self._base_h = float(base_h)
        self._scale_base = float(scale_base)

    @classmethod
    def from_box(cls, box: BoundingBox, scale_base: Real = SCALE_BASE) -> "TargetState":
        """The s = 0 state whose box is `box`."""
        cx, cy = box.center
        return cls(cx, cy, 0.0, box.w, box.h, scale_base=scale_base)

    @property
    def cx(self) -> float:
        return self._cx

    @property
    def cy(self) -> float:
        return self._cy

    @property
    def s(self) -> float:
        """Scale exponent relative to the first-frame extents."""
        return self._s

    @property
    def base_w(self) -> float:
        return self._base_w

    @property
    def base_h(self) -> float:
        return self._base_h

    @property
    def scale_base(self) -> float:
        return self._scale_base

    @property
    def w(self) -> float:
        return self._base_w * self._scale_base ** self._s

    @property
    def h(self) -> float:
        return self._base_h * self._scale_base ** self._s

    @property
    def box(self) -> BoundingBox:
        return BoundingBox.from_center(self._cx, self._cy, self.w, self.h)

    def moved(self, cx: float, cy: float, s: float) -> "TargetState":
        """A state with the same base extents at a new position and scale."""
        return TargetState(
            cx, cy, s, self._base_w, self._base_h, scale_base=self._scale_base
        )

    def __repr__(self) -> str:
        """An executable string representation of this object."""
        return (
            f"{self.__class__.__name__}("
            f"{self._cx!r}, {self._cy!r}, {self._s!r}, "
            f"{self._base_w!r}, {self._base_h!r}, "
            f"scale_base={self._scale_base!r}"
            f")"
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, TargetState):
            return NotImplemented
        return (
            self._cx,
            self._cy,
            self._s,
            self._base_w,
            self._base_h,
            self._scale_base,
        ) == (
            other._cx,
            other._cy,
            other._s,
            other._base_w,
            other._base_h,
            other._scale_base,
        )

    def __hash__(self) -> int:
        return hash((self._cx, self._cy, self._s, self._base_w, self._base_h))


@dataclass
class CandidateGenConfig:
    """Gaussian candidate generator: N draws around the previous state.

    Translation variance is `trans_var_coeff * r**2` per axis (r is the mean
    of the previous box's width and height); the scale exponent has variance
    `scale_var`. Zero variances are allowed and yield copies of the mean.
    """

    num_candidates: int = NUM_CANDIDATES
    trans_var_coeff: float = TRANS_VAR_COEFF
    scale_var: float = SCALE_VAR
    scale_base: float = SCALE_BASE

    def __post_init__(self):
        check_type("num_candidates", self.num_candidates, Integral)
        if self.num_candidates < 1:
            raise ConfigurationError(
                f"num_candidates must be >= 1; received {self.num_candidates}."
            )
        check_positive("trans_var_coeff", self.trans_var_coeff, allow_zero=True)
        check_positive("scale_var", self.scale_var, allow_zero=True)
        check_positive("scale_base", self.scale_base)


def as_box_array(boxes: Union[BoxLike, Sequence[BoxLike]]) -> np.ndarray:
    """Boxes as a float64 (N, 4) array of x, y, w, h rows."""
    if isinstance(boxes, BoundingBox):
        return boxes.to_array()[None, :]
    if isinstance(boxes, np.ndarray):
        array = boxes.astype(np.float64, copy=False)
    else:
        boxes = list(boxes)
        if boxes and isinstance(boxes[0], BoundingBox):
            array = np.array([box.to_array() for box in boxes], dtype=np.float64)
        else:
            array = np.asarray(boxes, dtype=np.float64)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != 4:
        raise InputError(
            f"Boxes must be (N, 4) x, y, w, h rows; received {array.shape}."
        )
    return array


def overlap_ratios(
    boxes: Union[BoxLike, Sequence[BoxLike]], reference: BoxLike
) -> np.ndarray:
    """IoU of every row of `boxes` with `reference` (or row-wise if both are N x 4)."""
    a = as_box_array(boxes)
    b = as_box_array(reference)
    left = np.maximum(a[:, 0], b[:, 0])
    top = np.maximum(a[:, 1], b[:, 1])
    right = np.minimum(a[:, 0] + a[:, 2], b[:, 0] + b[:, 2])
    bottom = np.minimum(a[:, 1] + a[:, 3], b[:, 1] + b[:, 3])
    intersection = np.clip(right - left, 0, None) * np.clip(bottom - top, 0, None)
    union = a[:, 2] * a[:, 3] + b[:, 2] * b[:, 3] - intersection
    ratios = np.clip(intersection / union, 0.0, 1.0)
    # Rounding in the corner arithmetic must not push coincident boxes below 1.
    return np.where(np.all(a == b, axis=1), 1.0, ratios)


def iou(a: BoxLike, b: BoxLike) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    return float(overlap_ratios(a, b)[0])


def center_distances(boxes: BoxLike, reference: BoxLike) -> np.ndarray:
    """Euclidean distance between box centers, row-wise."""
    a = as_box_array(boxes)
    b = as_box_array(reference)
    dx = (a[:, 0] + a[:, 2] / 2.0) - (b[:, 0] + b[:, 2] / 2.0)
    dy = (a[:, 1] + a[:, 3] / 2.0) - (b[:, 1] + b[:, 3] / 2.0)
    return np.hypot(dx, dy)
