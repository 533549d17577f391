"""Custom exceptions."""

# SPDX-License-Identifier: Apache-2.0

from pathlib import Path
from typing import Optional, Tuple, Union


class MDTrackerException(Exception):
    """Base class for all mdtracker exceptions."""

    exit_code: int = 10


class ConfigurationError(MDTrackerException, ValueError):
    """An invalid configuration value or mismatched layer parameters."""

    exit_code = 3


class InputError(MDTrackerException, ValueError):
    """Invalid input data."""

    exit_code = 4


class ShapeError(InputError):
    """A tensor does not have the shape an operation requires."""


class UsageError(MDTrackerException, RuntimeError):
    """An API was called out of order or on an object in the wrong state."""

    exit_code = 9


class NumericalError(MDTrackerException, ArithmeticError):
    """An operation produced non-finite values."""

    exit_code = 8

    def __init__(self, *args, op: str):
        super(NumericalError, self).__init__(*args)
        self.op = op

    def __str__(self):
        msg = f"non-finite values produced by {self.op}"
        if self.args:
            msg += " - " + " ".join(str(arg) for arg in self.args)
        return msg


class SamplingExhaustedError(MDTrackerException):
    """Rejection sampling ran out of proposals before meeting its quota."""

    exit_code = 7

    args: Tuple[object, ...]
    constraint: str
    found: int
    requested: int

    def __init__(self, *args, constraint: str, found: int, requested: int):
        super(SamplingExhaustedError, self).__init__(*args)
        self.args = args
        self.constraint = constraint
        self.found = found
        self.requested = requested

    def __repr__(self):
        return (
            f"{self.__class__.__name__}("
            f"{', '.join([repr(arg) for arg in self.args])}, "
            f"constraint={self.constraint!r}, "
            f"found={self.found!r}, "
            f"requested={self.requested!r}"
            f")"
        )

    def __str__(self):
        msg = [
            f"sampling exhausted for constraint {self.constraint}:",
            f"found {self.found} of {self.requested}",
        ]
        if self.args:
            msg.append("-")
            msg += [str(arg) for arg in self.args]
        return " ".join(msg)


class ParseError(InputError):
    """Malformed text input, located by file and line."""

    exit_code = 5

    args: Tuple[object, ...]
    path: Optional[str]
    line_number: Optional[int]

    def __init__(
        self,
        *args,
        path: Union[str, Path, None] = None,
        line_number: Optional[int] = None,
    ):
        super(ParseError, self).__init__(*args)
        self.args = args
        self.path = str(path) if path is not None else None
        self.line_number = line_number

    def __repr__(self):
        return (
            f"{self.__class__.__name__}("
            f"{', '.join([repr(arg) for arg in self.args])}, "
            f"path={self.path!r}, "
            f"line_number={self.line_number!r}"
            f")"
        )

    def __str__(self):
        location = []
        if self.path:
            location.append(self.path)
        if self.line_number is not None:
            location.append(f"line {self.line_number}")

        msg = []
        if location:
            msg.append(":".join(location) + ":")
        msg += [str(arg) for arg in self.args]
        return " ".join(msg)


class CheckpointError(MDTrackerException):
    """A checkpoint file is malformed or does not match its configuration."""

    exit_code = 6


class UnsupportedVersionError(CheckpointError):
    """A checkpoint was written with a format version this package cannot read."""

    def __init__(self, *args, version: int):
        super(UnsupportedVersionError, self).__init__(*args)
        self.version = version

    def __str__(self):
        return f"unsupported checkpoint format version {self.version}"
