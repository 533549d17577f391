"""Binary checkpoints of an MDNet's parameters.

Layout (all integers unsigned 32-bit little-endian):

```
magic "MDNC" | version
config: input_size | channel_scale (f64) | K | lrn flag (u8)
layer count
per layer: name length | name (utf-8) | rank | dims... |
           weights (<f4, row-major) | bias (<f4, dims[0] values)
```

Layers are written in network order: conv1..fc5, then the branches
(`fc6.0 .. fc6.{K-1}` for a pretrained network, `fc6` for an online one).
"""

# SPDX-License-Identifier: Apache-2.0

import logging
import struct
from pathlib import Path
from typing import BinaryIO, List, Tuple, Union

import numpy as np

from mdtracker.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from mdtracker.engine.tensor import ParamGroup
from mdtracker.exceptions import (
    CheckpointError,
    ConfigurationError,
    UnsupportedVersionError,
)
from mdtracker.models.mdnet import (
    BRANCH_LAYER_NAME,
    MDNet,
    MDNetConfig,
    ONLINE_MODE,
    PRETRAIN_MODE,
    SHARED_LAYER_NAMES,
)
from mdtracker.utils import check_type


logger = logging.getLogger(__name__)


FLOAT_DTYPE = np.dtype("<f4")
U32 = struct.Struct("<I")
CONFIG_BLOCK = struct.Struct("<IdIB")


def _write_u32(file: BinaryIO, value: int) -> None:
    file.write(U32.pack(value))


def _read_exact(file: BinaryIO, size: int, what: str) -> bytes:
    data = file.read(size)
    if len(data) != size:
        raise CheckpointError(
            f"Truncated checkpoint: expected {size} bytes of {what}, "
            f"found {len(data)}."
        )
    return data


def _read_u32(file: BinaryIO, what: str) -> int:
    return U32.unpack(_read_exact(file, U32.size, what))[0]


def _read_floats(file: BinaryIO, count: int, what: str) -> np.ndarray:
    data = _read_exact(file, count * FLOAT_DTYPE.itemsize, what)
    return np.frombuffer(data, dtype=FLOAT_DTYPE).astype(np.float32)


def _write_layer(file: BinaryIO, group: ParamGroup) -> None:
    name = group.name.encode("utf-8")
    _write_u32(file, len(name))
    file.write(name)
    dims = group.weights.dims
    _write_u32(file, len(dims))
    for extent in dims:
        _write_u32(file, extent)
    file.write(np.ascontiguousarray(group.weights.data, dtype=FLOAT_DTYPE).tobytes())
    file.write(np.ascontiguousarray(group.bias.data, dtype=FLOAT_DTYPE).tobytes())


def _read_layer(file: BinaryIO) -> Tuple[str, np.ndarray, np.ndarray]:
    name_length = _read_u32(file, "a layer name length")
    try:
        name = _read_exact(file, name_length, "a layer name").decode("utf-8")
    except UnicodeDecodeError as error:
        raise CheckpointError(f"Invalid layer name: {error}") from error
    rank = _read_u32(file, f"the rank of {name}")
    if not 1 <= rank <= 4:
        raise CheckpointError(f"{name}: invalid weight rank {rank}.")
    dims = tuple(_read_u32(file, f"the dims of {name}") for _ in range(rank))
    weights = _read_floats(file, int(np.prod(dims)), f"{name} weights").reshape(dims)
    bias = _read_floats(file, dims[0], f"{name} bias")
    return name, weights, bias


def save_checkpoint(net: MDNet, path: Union[str, Path]) -> Path:
    """Write every parameter of `net` to `path`."""
    check_type("net", net, MDNet)
    check_type("path", path, (str, Path))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    config = net.config
    groups = net.param_groups()
    with path.open("wb") as file:
        file.write(CHECKPOINT_MAGIC)
        _write_u32(file, CHECKPOINT_VERSION)
        file.write(
            CONFIG_BLOCK.pack(
                config.input_size,
                config.channel_scale,
                net.num_branches,
                int(config.lrn_enabled),
            )
        )
        _write_u32(file, len(groups))
        for group in groups:
            _write_layer(file, group)

    logger.info("Saved %r to %s.", net, path)
    return path


def load_checkpoint(path: Union[str, Path]) -> MDNet:
    """Read a network written by `save_checkpoint`; parameters are bit-exact."""
    check_type("path", path, (str, Path))
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint {path} does not exist.")

    with path.open("rb") as file:
        magic = _read_exact(file, len(CHECKPOINT_MAGIC), "the magic bytes")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(
                f"{path} is not an mdtracker checkpoint (magic {magic!r})."
            )
        version = _read_u32(file, "the format version")
        if version != CHECKPOINT_VERSION:
            raise UnsupportedVersionError(str(path), version=version)

        input_size, channel_scale, num_domains, lrn = CONFIG_BLOCK.unpack(
            _read_exact(file, CONFIG_BLOCK.size, "the config block")
        )
        num_layers = _read_u32(file, "the layer count")
        layers = [_read_layer(file) for _ in range(num_layers)]
        if file.read(1):
            raise CheckpointError(f"{path} has trailing bytes after the last layer.")

    try:
        config = MDNetConfig(
            num_domains=max(num_domains, 1),
            input_size=input_size,
            channel_scale=channel_scale,
            lrn_enabled=bool(lrn),
        )
    except ConfigurationError as error:
        raise CheckpointError(f"{path}: invalid config block ({error})") from error

    names = [name for name, _, _ in layers]
    branch_names = names[len(SHARED_LAYER_NAMES) :]
    if names[: len(SHARED_LAYER_NAMES)] != list(SHARED_LAYER_NAMES):
        raise CheckpointError(
            f"{path}: expected shared layers {list(SHARED_LAYER_NAMES)}; "
            f"found {names[: len(SHARED_LAYER_NAMES)]}."
        )
    if branch_names == [BRANCH_LAYER_NAME] and num_domains == 1:
        mode = ONLINE_MODE
    elif branch_names == [f"{BRANCH_LAYER_NAME}.{d}" for d in range(num_domains)]:
        mode = PRETRAIN_MODE
    else:
        raise CheckpointError(
            f"{path}: branch layers {branch_names} do not match K={num_domains}."
        )

    groups: List[ParamGroup] = [
        ParamGroup(name, weights, bias) for name, weights, bias in layers
    ]
    try:
        net = MDNet.from_param_groups(
            config,
            groups[: len(SHARED_LAYER_NAMES)],
            groups[len(SHARED_LAYER_NAMES) :],
            mode=mode,
        )
    except ConfigurationError as error:
        raise CheckpointError(f"{path}: {error}") from error

    logger.info("Loaded %r from %s.", net, path)
    return net
