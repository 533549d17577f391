"""The multi-domain tracking network: shared conv1-3/fc4-5 plus fc6 branches."""

# SPDX-License-Identifier: Apache-2.0

import hashlib
import logging
import math
from dataclasses import dataclass
from numbers import Integral
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from mdtracker.config import (
    CONV_SPECS,
    DESK_CHANNEL_SCALE,
    DROPOUT_RATE,
    FC_WIDTH,
    INIT_STD,
    INPUT_SIZE,
    MIN_FC_WIDTH,
    POOL_KERNEL,
    POOL_STRIDE,
)
from mdtracker.engine.layers import (
    conv2d,
    dropout,
    flatten,
    linear,
    local_response_norm,
    maxpool2d,
    output_shape,
    positive_score,
    relu,
)
from mdtracker.engine.tensor import as_tensor, ParamGroup, Tensor
from mdtracker.exceptions import ConfigurationError, ShapeError, UsageError
from mdtracker.utils import (
    check_in_range,
    check_positive,
    check_type,
    parse_layer_ranges,
)


logger = logging.getLogger(__name__)


PRETRAIN_MODE = "pretrain"
ONLINE_MODE = "online"

SHARED_LAYER_NAMES = ("conv1", "conv2", "conv3", "fc4", "fc5")
BRANCH_LAYER_NAME = "fc6"
NUM_CLASSES = 2

INIT_SCHEMES = ("gaussian", "fan_in")
EVAL_BATCH_SIZE = 64


@dataclass
class MDNetConfig:
    """Geometry and initialization of an MDNet.

    `channel_scale` shrinks every conv channel count and the fc width while
    keeping the spatial geometry (107 -> 51 -> 25 -> 11 -> 5 -> 3). The default
    is the desk-scale network; `MDNetConfig.full()` gives the full one.

    `init_scheme` chooses how the shared layers are initialized when no
    checkpoint is loaded: `"gaussian"` draws N(0, init_std^2) everywhere,
    `"fan_in"` scales each shared layer by sqrt(2 / fan_in). fc6 branches
    always use N(0, init_std^2).
    """

    num_domains: int = 1
    input_size: int = INPUT_SIZE
    conv_specs: Tuple[Tuple[int, int, int], ...] = CONV_SPECS
    fc_width: int = FC_WIDTH
    channel_scale: float = DESK_CHANNEL_SCALE
    lrn_enabled: bool = False
    dropout_rate: float = DROPOUT_RATE
    init_std: float = INIT_STD
    init_scheme: str = "gaussian"

    def __post_init__(self):
        check_type("num_domains", self.num_domains, Integral)
        check_type("input_size", self.input_size, Integral)
        check_type("fc_width", self.fc_width, Integral)
        check_type("lrn_enabled", self.lrn_enabled, bool)
        check_type("init_scheme", self.init_scheme, str)
        if self.num_domains < 1:
            raise ConfigurationError(
                f"num_domains must be >= 1; received {self.num_domains}."
            )
        check_in_range("channel_scale", self.channel_scale, 0.0, 1.0, include_low=False)
        check_in_range("dropout_rate", self.dropout_rate, 0.0, 1.0, include_high=False)
        check_positive("init_std", self.init_std)
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigurationError(
                f"init_scheme must be one of {INIT_SCHEMES}; "
                f"received {self.init_scheme!r}."
            )
        self.conv_specs = tuple(tuple(int(v) for v in spec) for spec in self.conv_specs)
        if len(self.conv_specs) != 3 or any(len(spec) != 3 for spec in self.conv_specs):
            raise ConfigurationError(
                f"conv_specs must hold three (channels, kernel, stride) triples; "
                f"received {self.conv_specs!r}."
            )
        if self.fc_width * self.channel_scale < MIN_FC_WIDTH:
            raise ConfigurationError(
                f"fc_width * channel_scale must be >= {MIN_FC_WIDTH}; received "
                f"{self.fc_width} * {self.channel_scale}."
            )
        if min(self.spatial_extents) < 1:
            raise ConfigurationError(
                f"input_size {self.input_size} is too small for the conv stack "
                f"(extents {self.spatial_extents})."
            )

    @classmethod
    def full(cls, num_domains: int = 1, **overrides) -> "MDNetConfig":
        """Full VGG-M geometry: 96/256/512 channels, 512-wide fc, LRN on."""
        options = dict(channel_scale=1.0, lrn_enabled=True)
        options.update(overrides)
        return cls(num_domains=num_domains, **options)

    @classmethod
    def desk(cls, num_domains: int = 1, **overrides) -> "MDNetConfig":
        """Reduced network (12/32/64 channels, 64-wide fc) without LRN."""
        options = dict(channel_scale=DESK_CHANNEL_SCALE, lrn_enabled=False)
        options.update(overrides)
        return cls(num_domains=num_domains, **options)

    @property
    def channels(self) -> Tuple[int, ...]:
        return tuple(
            max(1, int(round(channels * self.channel_scale)))
            for channels, _, _ in self.conv_specs
        )

    @property
    def fc_units(self) -> int:
        return int(round(self.fc_width * self.channel_scale))

    @property
    def spatial_extents(self) -> Tuple[int, ...]:
        """Input, conv1, pool1, conv2, pool2 and conv3 spatial extents."""
        (_, k1, s1), (_, k2, s2), (_, k3, s3) = self.conv_specs
        pool = ("pool", POOL_KERNEL, POOL_STRIDE)
        return output_shape(
            self.input_size,
            [("conv1", k1, s1), pool, ("conv2", k2, s2), pool, ("conv3", k3, s3)],
        )

    @property
    def conv3_shape(self) -> Tuple[int, int, int]:
        size = self.spatial_extents[-1]
        return self.channels[-1], size, size

    @property
    def feature_dim(self) -> int:
        """Length of a flattened conv3 feature."""
        channels, height, width = self.conv3_shape
        return channels * height * width


class MDNet(object):
    """Shared layers w1..w5 plus indexed fc6 branches (domain d <-> branch d).

    In pretrain mode the network holds one branch per training domain. For
    tracking, `replace_branches()` discards them and installs a single fresh
    fc6; the network is then in online mode for good.
    """

    __slots__ = ["config", "shared", "branches", "mode", "_trainable"]

    config: MDNetConfig
    shared: List[ParamGroup]
    branches: List[ParamGroup]
    mode: str

    def __init__(
        self,
        config: Optional[MDNetConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        config = config if config is not None else MDNetConfig()
        check_type("config", config, MDNetConfig)
        rng = rng if rng is not None else np.random.default_rng()

        self.config = config
        self.shared = _init_shared(config, rng)
        self.branches = [
            _init_branch(config, rng, name=f"{BRANCH_LAYER_NAME}.{d}")
            for d in range(config.num_domains)
        ]
        self.mode = PRETRAIN_MODE
        self._trainable = set(range(1, 7))

    @classmethod
    def from_param_groups(
        cls,
        config: MDNetConfig,
        shared: Sequence[ParamGroup],
        branches: Sequence[ParamGroup],
        mode: str = PRETRAIN_MODE,
    ) -> "MDNet":
        """Assemble a network from existing parameters, validating their shapes."""
        net = cls.__new__(cls)
        net.config = config
        net.shared = list(shared)
        net.branches = list(branches)
        net.mode = mode
        net._trainable = set(range(1, 7))
        net._validate()
        return net

    def _validate(self) -> None:
        expected = dict(_layer_shapes(self.config))
        if len(self.shared) != len(SHARED_LAYER_NAMES):
            raise ConfigurationError(
                f"Expected {len(SHARED_LAYER_NAMES)} shared layers; "
                f"received {len(self.shared)}."
            )
        for group, name in zip(self.shared, SHARED_LAYER_NAMES):
            if group.weights.dims != expected[name]:
                raise ConfigurationError(
                    f"{name}: expected weights {expected[name]}; "
                    f"received {group.weights.dims}."
                )
        for group in self.branches:
            if group.weights.dims != expected[BRANCH_LAYER_NAME]:
                raise ConfigurationError(
                    f"{group.name}: expected weights {expected[BRANCH_LAYER_NAME]}; "
                    f"received {group.weights.dims}."
                )
        if self.mode not in (PRETRAIN_MODE, ONLINE_MODE):
            raise ConfigurationError(f"Unknown network mode {self.mode!r}.")
        if self.mode == ONLINE_MODE and len(self.branches) != 1:
            raise ConfigurationError("An online network has exactly one branch.")
        if not self.branches:
            raise ConfigurationError("A network needs at least one fc6 branch.")

    @property
    def num_branches(self) -> int:
        return len(self.branches)

    @property
    def trainable_layers(self) -> List[int]:
        """Layer numbers (1..6) currently receiving updates."""
        return sorted(self._trainable)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}("
            f"mode={self.mode!r}, "
            f"branches={self.num_branches}, "
            f"channels={self.config.channels!r}, "
            f"fc_units={self.config.fc_units}, "
            f"lrn={self.config.lrn_enabled}"
            f")"
        )

    # Forward passes
    def _check_patches(self, patches: Tensor) -> None:
        size = self.config.input_size
        if patches.data.ndim != 4 or patches.dims[1:] != (3, size, size):
            raise ShapeError(
                f"Expected patches of shape (N, 3, {size}, {size}); "
                f"received {patches.dims}."
            )

    def _check_branch(self, branch: int) -> None:
        if not 0 <= branch < len(self.branches):
            raise ConfigurationError(
                f"Branch {branch} does not exist; the network has "
                f"{len(self.branches)} branch(es)."
            )

    def forward_conv3(self, patches: Union[Tensor, np.ndarray]) -> Tensor:
        """Run only the shared convolutional stack: N x C x 3 x 3 features."""
        x = as_tensor(patches)
        self._check_patches(x)
        conv1, conv2, conv3 = self.shared[:3]
        (_, _, s1), (_, _, s2), (_, _, s3) = self.config.conv_specs

        x = relu(conv2d(x, conv1, stride=s1))
        if self.config.lrn_enabled:
            x = local_response_norm(x)
        x = maxpool2d(x, POOL_KERNEL, POOL_STRIDE)
        x = relu(conv2d(x, conv2, stride=s2))
        if self.config.lrn_enabled:
            x = local_response_norm(x)
        x = maxpool2d(x, POOL_KERNEL, POOL_STRIDE)
        return relu(conv2d(x, conv3, stride=s3))

    def forward_fc(
        self,
        features: Union[Tensor, np.ndarray],
        branch: int = 0,
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """fc4 -> ReLU -> dropout -> fc5 -> ReLU -> dropout -> fc6[branch]."""
        self._check_branch(branch)
        x = as_tensor(features)
        if x.data.ndim == 4:
            x = flatten(x)
        if x.data.ndim != 2 or x.dims[1] != self.config.feature_dim:
            raise ShapeError(
                f"Expected conv3 features with {self.config.feature_dim} values "
                f"per sample; received {x.dims}."
            )
        fc4, fc5 = self.shared[3:]
        rate = self.config.dropout_rate

        x = dropout(relu(linear(x, fc4)), rate, train_mode, rng)
        x = dropout(relu(linear(x, fc5)), rate, train_mode, rng)
        return linear(x, self.branches[branch])

    def forward(
        self,
        patches: Union[Tensor, np.ndarray],
        branch: int = 0,
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """Logits (N x 2) of the target/background classifier on `branch`."""
        self._check_branch(branch)
        return self.forward_fc(self.forward_conv3(patches), branch, train_mode, rng)

    def conv3_features(
        self, patches: np.ndarray, batch_size: int = EVAL_BATCH_SIZE
    ) -> np.ndarray:
        """conv3 features of many patches, computed in chunks without a tape."""
        patches = np.asarray(patches)
        if len(patches) == 0:
            return np.zeros((0,) + self.config.conv3_shape, dtype=np.float32)
        return np.concatenate(
            [
                self.forward_conv3(patches[start : start + batch_size]).data
                for start in range(0, len(patches), batch_size)
            ]
        )

    def score_features(
        self,
        features: np.ndarray,
        branch: int = 0,
        batch_size: int = EVAL_BATCH_SIZE,
    ) -> np.ndarray:
        """f+ for cached conv3 features, in eval mode."""
        features = np.asarray(features)
        if len(features) == 0:
            return np.zeros(0, dtype=np.float64)
        return np.concatenate(
            [
                positive_score(
                    self.forward_fc(features[start : start + batch_size], branch)
                )
                for start in range(0, len(features), batch_size)
            ]
        )

    def score_patches(
        self,
        patches: np.ndarray,
        branch: int = 0,
        batch_size: int = EVAL_BATCH_SIZE,
    ) -> np.ndarray:
        """f+ for image patches, in eval mode."""
        patches = np.asarray(patches)
        if len(patches) == 0:
            return np.zeros(0, dtype=np.float64)
        return np.concatenate(
            [
                positive_score(
                    self.forward(patches[start : start + batch_size], branch)
                )
                for start in range(0, len(patches), batch_size)
            ]
        )

    # Parameters
    def layer_groups(self, layer: int) -> List[ParamGroup]:
        """Parameter groups of layer `layer` (1..6); layer 6 is every branch."""
        if not 1 <= layer <= 6:
            raise ConfigurationError(f"Layers are numbered 1..6; received {layer}.")
        return list(self.branches) if layer == 6 else [self.shared[layer - 1]]

    def param_groups(self, branch: Optional[int] = None) -> List[ParamGroup]:
        """Shared groups plus one branch (or every branch if `branch` is None)."""
        if branch is None:
            return self.shared + self.branches
        self._check_branch(branch)
        return self.shared + [self.branches[branch]]

    def set_trainable(self, ranges: Union[str, Iterable[str]]) -> None:
        """Make exactly the selected layers (e.g. `"w4:6"`) trainable."""
        selected = set(parse_layer_ranges(ranges))
        for layer in range(1, 7):
            for group in self.layer_groups(layer):
                group.trainable = layer in selected
        self._trainable = selected
        logger.debug("Trainable layers: %s", sorted(selected))

    def set_lr_multipliers(self, multipliers: Dict[int, float]) -> None:
        """Set per-layer learning-rate multipliers, keyed by layer number."""
        for layer, multiplier in multipliers.items():
            check_positive(f"lr multiplier for w{layer}", multiplier)
            for group in self.layer_groups(layer):
                group.lr_multiplier = float(multiplier)

    def replace_branches(self, rng: np.random.Generator) -> "MDNet":
        """Discard every domain branch and install one fresh fc6 (online mode)."""
        if self.mode == ONLINE_MODE:
            raise UsageError("replace_branches() was already called on this network.")
        discarded = len(self.branches)
        branch = _init_branch(self.config, rng, name=BRANCH_LAYER_NAME)
        branch.trainable = 6 in self._trainable
        self.branches = [branch]
        self.mode = ONLINE_MODE
        logger.info("Replaced %d domain branch(es) with a single fc6.", discarded)
        return self

    def zero_grad(self) -> None:
        for group in self.param_groups():
            group.zero_grad()

    def shared_checksum(self) -> str:
        """SHA-256 over the raw bytes of every shared parameter."""
        digest = hashlib.sha256()
        for group in self.shared:
            for tensor in group.tensors:
                digest.update(np.ascontiguousarray(tensor.data).tobytes())
        return digest.hexdigest()

    def copy(self) -> "MDNet":
        """An independent deep copy (parameters, optimizer state and flags)."""
        net = MDNet.from_param_groups(
            self.config,
            [group.copy() for group in self.shared],
            [group.copy() for group in self.branches],
            mode=self.mode,
        )
        net._trainable = set(self._trainable)
        return net


def _layer_shapes(config: MDNetConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    channels = config.channels
    in_channels = (3,) + channels[:-1]
    shapes = [
        (name, (out_c, in_c, kernel, kernel))
        for name, out_c, in_c, (_, kernel, _) in zip(
            SHARED_LAYER_NAMES[:3], channels, in_channels, config.conv_specs
        )
    ]
    shapes.append(("fc4", (config.fc_units, config.feature_dim)))
    shapes.append(("fc5", (config.fc_units, config.fc_units)))
    shapes.append((BRANCH_LAYER_NAME, (NUM_CLASSES, config.fc_units)))
    return shapes


def _init_std(config: MDNetConfig, weight_shape: Tuple[int, ...]) -> float:
    if config.init_scheme == "fan_in":
        fan_in = int(np.prod(weight_shape[1:]))
        return math.sqrt(2.0 / fan_in)
    return config.init_std


def _init_shared(config: MDNetConfig, rng: np.random.Generator) -> List[ParamGroup]:
    return [
        ParamGroup.gaussian(name, shape, rng, std=_init_std(config, shape))
        for name, shape in _layer_shapes(config)
        if name != BRANCH_LAYER_NAME
    ]


def _init_branch(
    config: MDNetConfig, rng: np.random.Generator, name: str
) -> ParamGroup:
    shape = dict(_layer_shapes(config))[BRANCH_LAYER_NAME]
    return ParamGroup.gaussian(name, shape, rng, std=config.init_std)
