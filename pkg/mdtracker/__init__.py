"""Multi-domain CNN visual tracking in native Python."""

# SPDX-License-Identifier: Apache-2.0

from mdtracker.checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
from mdtracker.data_loading import (  # noqa: F401
    load_sequence,
    parse_groundtruth,
    read_results,
    save_sequence,
    write_results,
)
from mdtracker.evaluation import (  # noqa: F401
    EvalCurves,
    evaluate,
    run_with_reinitialization,
)
from mdtracker.exceptions import (  # noqa: F401
    CheckpointError,
    ConfigurationError,
    InputError,
    MDTrackerException,
    ParseError,
    SamplingExhaustedError,
    UsageError,
)
from mdtracker.models.geometry import BoundingBox, iou, TargetState  # noqa: F401
from mdtracker.models.mdnet import MDNet, MDNetConfig  # noqa: F401
from mdtracker.synthetic import generate_sequence, SyntheticSequenceSpec  # noqa: F401
from mdtracker.tracker import OnlineTracker, track_sequence, TrackerConfig  # noqa: F401
from mdtracker.training import (  # noqa: F401
    build_domain_dataset,
    pretrain,
    pretrain_single_domain,
    PretrainConfig,
)
