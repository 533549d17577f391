"""Domain types: boxes, target states and the multi-domain network."""

# SPDX-License-Identifier: Apache-2.0

from mdtracker.models.geometry import (  # noqa: F401
    BoundingBox,
    CandidateGenConfig,
    iou,
    overlap_ratios,
    TargetState,
)
from mdtracker.models.mdnet import MDNet, MDNetConfig  # noqa: F401
