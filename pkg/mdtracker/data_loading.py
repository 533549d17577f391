"""Load and save sequences, ground truth, results and configuration files."""

# SPDX-License-Identifier: Apache-2.0

import dataclasses
import logging
import re
import typing
from collections import abc
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Mapping,
    Sequence,
    Type,
    TypeVar,
    Union,
)

import numpy as np
from PIL import Image, ImageDraw

from mdtracker.config import (
    FRAME_EXTENSIONS,
    SEQUENCE_GROUNDTRUTH_FILE,
    SEQUENCE_IMAGE_DIR,
)
from mdtracker.exceptions import ConfigurationError, InputError, ParseError
from mdtracker.models.geometry import BoundingBox
from mdtracker.utils import check_type


logger = logging.getLogger(__name__)


PathLike = Union[str, Path]
T = TypeVar("T")

FIELD_SEPARATORS = re.compile(r"[,\s]+")
TRUE_STRINGS = ("1", "true", "yes", "on")
FALSE_STRINGS = ("0", "false", "no", "off")


def _as_path(variable_name: str, path: PathLike) -> Path:
    check_type(variable_name, path, (str, Path))
    return Path(path)


# Ground truth and results
def parse_groundtruth(path: PathLike) -> List[BoundingBox]:
    """Parse an OTB-style ground-truth (or results) file.

    Each non-blank line holds `x y w h` separated by commas, tabs or spaces,
    with a 1-based pixel origin; boxes are returned in the 0-based
    convention used throughout the package.

    **Raises:**

    A `ParseError`, naming the file and line, for a wrong field count, a
    non-numeric field, or a non-positive extent.
    """
    path = _as_path("path", path)
    if not path.is_file():
        raise InputError(f"Ground-truth file {path} does not exist.")

    boxes = []
    with path.open() as file:
        for line_number, line in enumerate(file, start=1):
            text = line.strip()
            if not text:
                continue
            fields = FIELD_SEPARATORS.split(text)
            if len(fields) != 4:
                raise ParseError(
                    f"expected 4 fields (x, y, w, h); found {len(fields)}",
                    path=path,
                    line_number=line_number,
                )
            try:
                x, y, w, h = (float(value) for value in fields)
            except ValueError:
                raise ParseError(
                    f"non-numeric field in {text!r}", path=path, line_number=line_number
                ) from None
            if not np.all(np.isfinite([x, y, w, h])) or w <= 0 or h <= 0:
                raise ParseError(
                    f"invalid box {text!r}", path=path, line_number=line_number
                )
            boxes.append(BoundingBox(x - 1.0, y - 1.0, w, h))
    return boxes


def format_box(box: BoundingBox) -> str:
    """One results line: `x,y,w,h` with two decimals and a 1-based origin."""
    return f"{box.x + 1.0:.2f},{box.y + 1.0:.2f},{box.w:.2f},{box.h:.2f}"


def write_results(path: PathLike, boxes: Sequence[BoundingBox]) -> Path:
    """Write one results line per frame."""
    path = _as_path("path", path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as file:
        for box in boxes:
            file.write(format_box(box) + "\n")
    return path


def read_results(path: PathLike) -> List[BoundingBox]:
    """Results files share the ground-truth format."""
    return parse_groundtruth(path)


# Frames and sequences
def load_frame(path: PathLike) -> np.ndarray:
    """Decode an image file to an H x W x 3 uint8 RGB array."""
    path = _as_path("path", path)
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as error:
        raise InputError(f"Cannot read frame {path}: {error}") from error


def list_frame_paths(directory: PathLike) -> List[Path]:
    """Image files in `directory`, in name order (zero-padded frame numbers)."""
    directory = _as_path("directory", directory)
    if not directory.is_dir():
        raise InputError(f"Frame directory {directory} does not exist.")
    return sorted(
        path
        for path in directory.iterdir()
        if path.is_file() and path.suffix.lower() in FRAME_EXTENSIONS
    )


class FrameList(abc.Sequence):
    """Frames of a sequence on disk, decoded on access."""

    def __init__(self, paths: Sequence[Path]) -> None:
        self._paths = list(paths)

    def __len__(self) -> int:
        return len(self._paths)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return FrameList(self._paths[index])
        return load_frame(self._paths[index])

    def __iter__(self) -> Iterator[np.ndarray]:
        for path in self._paths:
            yield load_frame(path)


@dataclasses.dataclass
class SequenceOnDisk:
    """A sequence directory: `img/` frames plus `groundtruth_rect.txt`."""

    name: str
    directory: Path
    frame_paths: List[Path]
    groundtruth: List[BoundingBox]

    def __len__(self) -> int:
        return len(self.frame_paths)

    @property
    def frames(self) -> FrameList:
        return FrameList(self.frame_paths)


def load_sequence(directory: PathLike) -> SequenceOnDisk:
    """Read a sequence directory, checking one ground-truth line per frame."""
    directory = _as_path("directory", directory)
    frame_paths = list_frame_paths(directory / SEQUENCE_IMAGE_DIR)
    if not frame_paths:
        raise InputError(f"No frames found in {directory / SEQUENCE_IMAGE_DIR}.")
    groundtruth = parse_groundtruth(directory / SEQUENCE_GROUNDTRUTH_FILE)
    if len(groundtruth) != len(frame_paths):
        raise InputError(
            f"{directory}: {len(frame_paths)} frames but {len(groundtruth)} "
            f"ground-truth lines."
        )
    logger.debug("Loaded sequence %s (%d frames).", directory.name, len(frame_paths))
    return SequenceOnDisk(directory.name, directory, frame_paths, groundtruth)


def list_sequences(root: PathLike) -> List[Path]:
    """Subdirectories of `root` that hold a ground-truth file, in name order."""
    root = _as_path("root", root)
    if not root.is_dir():
        raise InputError(f"Data directory {root} does not exist.")
    return sorted(
        path
        for path in root.iterdir()
        if path.is_dir() and (path / SEQUENCE_GROUNDTRUTH_FILE).is_file()
    )


def save_sequence(
    directory: PathLike,
    frames: Sequence[np.ndarray],
    groundtruth: Sequence[BoundingBox],
    extension: str = ".png",
) -> Path:
    """Write frames as `img/0001.png ...` plus `groundtruth_rect.txt`."""
    directory = _as_path("directory", directory)
    if len(frames) != len(groundtruth):
        raise InputError(
            f"{len(frames)} frames but {len(groundtruth)} ground-truth boxes."
        )
    if extension.lower() not in FRAME_EXTENSIONS:
        raise ConfigurationError(
            f"Unsupported frame extension {extension!r}; use one of {FRAME_EXTENSIONS}."
        )
    image_dir = directory / SEQUENCE_IMAGE_DIR
    image_dir.mkdir(parents=True, exist_ok=True)
    digits = max(4, len(str(len(frames))))
    for number, frame in enumerate(frames, start=1):
        Image.fromarray(np.asarray(frame, dtype=np.uint8)).save(
            image_dir / f"{number:0{digits}d}{extension}"
        )
    write_results(directory / SEQUENCE_GROUNDTRUTH_FILE, groundtruth)
    logger.info("Wrote %d frames to %s.", len(frames), directory)
    return directory


def save_overlay(
    frame: np.ndarray,
    boxes: Sequence[BoundingBox],
    path: PathLike,
    colors: Sequence[tuple] = ((255, 0, 0), (0, 255, 0)),
    width: int = 2,
) -> Path:
    """Save `frame` with each box outlined (first box in the first color)."""
    path = _as_path("path", path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image = Image.fromarray(np.asarray(frame, dtype=np.uint8))
    draw = ImageDraw.Draw(image)
    for index, box in enumerate(boxes):
        draw.rectangle(
            [box.x, box.y, box.x + box.w - 1, box.y + box.h - 1],
            outline=tuple(colors[index % len(colors)]),
            width=width,
        )
    image.save(path)
    return path


# Configuration files
def load_config_file(path: PathLike) -> Dict[str, str]:
    """Parse flat `key=value` lines; `#` starts a comment, blank lines are skipped."""
    path = _as_path("path", path)
    if not path.is_file():
        raise InputError(f"Configuration file {path} does not exist.")

    values = {}
    with path.open() as file:
        for line_number, line in enumerate(file, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, separator, value = text.partition("=")
            key = key.strip()
            if not separator or not key:
                raise ParseError(
                    f"expected key=value; found {text!r}",
                    path=path,
                    line_number=line_number,
                )
            if key in values:
                raise ParseError(
                    f"duplicate key {key!r}", path=path, line_number=line_number
                )
            values[key] = value.strip()
    return values


def _coerce(name: str, text: str, annotation, separators: str = r"[,x\s]+") -> Any:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)

    if origin is Union:
        if text.lower() == "none" and type(None) in args:
            return None
        inner = [arg for arg in args if arg is not type(None)]
        return _coerce(name, text, inner[0], separators)
    if origin is tuple:
        if len(args) == 2 and args[1] is Ellipsis:
            # Ranges such as "10-19,40-49"
            items = [item for item in re.split(r"[,;\s]+", text) if item]
            return tuple(_coerce(name, item, args[0], r"-") for item in items)
        items = [item for item in re.split(separators, text.strip()) if item]
        if len(items) != len(args):
            raise ConfigurationError(
                f"{name} expects {len(args)} values; received {text!r}."
            )
        return tuple(_coerce(name, item, arg) for item, arg in zip(items, args))
    if annotation is bool:
        lowered = text.lower()
        if lowered in TRUE_STRINGS:
            return True
        if lowered in FALSE_STRINGS:
            return False
        raise ConfigurationError(f"{name} expects a boolean; received {text!r}.")
    try:
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
    except ValueError:
        raise ConfigurationError(
            f"{name} expects {annotation.__name__}; received {text!r}."
        ) from None
    return text


def config_from_mapping(cls: Type[T], mapping: Mapping[str, Any]) -> T:
    """Build a configuration dataclass from string (or typed) values.

    Values are coerced to the declared field types; unknown keys are rejected.
    """
    if not dataclasses.is_dataclass(cls):
        raise ConfigurationError(f"{cls!r} is not a configuration dataclass.")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise ConfigurationError(
            f"Unknown {cls.__name__} keys {unknown}. Valid keys: {sorted(names)}"
        )
    options = {
        key: _coerce(key, value, hints[key]) if isinstance(value, str) else value
        for key, value in mapping.items()
    }
    return cls(**options)
