"""Utility functions."""

# SPDX-License-Identifier: Apache-2.0

import math
from typing import Any, Iterable, List, Tuple, Type, Union

from mdtracker.exceptions import ConfigurationError


def check_type(
    variable_name: str,
    obj: Any,
    acceptable_types: Union[Type, Tuple[Type, ...]],
    optional: bool = False,
):
    """Object is an instance of one of the acceptable types or None.

    Args:
        variable_name: The name of the variable being inspected.
        obj: The object to inspect.
        acceptable_types: A type or tuple of acceptable types.
        optional(bool): Whether or not the object may be None.

    Raises:
        TypeError: If the object is not an instance of one of the acceptable
            types, or if the object is None and optional=False.
    """
    if not isinstance(acceptable_types, tuple):
        acceptable_types = (acceptable_types,)

    # bool is an int subclass; a flag is never a count or a coordinate.
    is_stray_bool = isinstance(obj, bool) and bool not in acceptable_types

    if isinstance(obj, acceptable_types) and not is_stray_bool:
        # Object is an instance of an acceptable type.
        return
    elif optional and obj is None:
        # Object is None, and that is okay!
        return

    raise TypeError(
        f"{variable_name} should be a "
        f"{', '.join([t.__name__ for t in acceptable_types])}"
        f"{', or None' if optional else ''}. Received {obj!r} which is a "
        f"{type(obj).__name__}."
    )


def check_positive(variable_name: str, value: float, allow_zero: bool = False):
    """Raise a ConfigurationError unless the value is a finite positive number."""
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        requirement = "non-negative" if allow_zero else "positive"
        raise ConfigurationError(
            f"{variable_name} must be a finite {requirement} number; "
            f"received {value!r}."
        )


def check_in_range(
    variable_name: str,
    value: float,
    low: float,
    high: float,
    include_low: bool = True,
    include_high: bool = True,
):
    """Raise a ConfigurationError unless low <= value <= high (bounds optional)."""
    above = value >= low if include_low else value > low
    below = value <= high if include_high else value < high
    if not (math.isfinite(value) and above and below):
        raise ConfigurationError(
            f"{variable_name} must be in "
            f"{'[' if include_low else '('}{low}, {high}"
            f"{']' if include_high else ')'}; received {value!r}."
        )


def parse_layer_ranges(ranges: Union[str, Iterable[str]]) -> List[int]:
    """Expand layer selectors like `"w4"` or `"w1:3"` into layer numbers."""
    if isinstance(ranges, str):
        ranges = [ranges]

    layers = set()
    for selector in ranges:
        check_type("layer selector", selector, str)
        text = selector.strip().lower()
        if not text.startswith("w"):
            raise ConfigurationError(
                f"Layer selector {selector!r} must look like 'w4' or 'w1:3'."
            )
        bounds = text[1:].split(":")
        try:
            numbers = [int(bound) for bound in bounds]
        except ValueError:
            raise ConfigurationError(
                f"Layer selector {selector!r} must look like 'w4' or 'w1:3'."
            ) from None
        if len(numbers) == 1:
            first = last = numbers[0]
        elif len(numbers) == 2:
            first, last = numbers
        else:
            raise ConfigurationError(f"Invalid layer selector {selector!r}.")
        if not 1 <= first <= last <= 6:
            raise ConfigurationError(
                f"Layer selector {selector!r} must stay within w1..w6."
            )
        layers.update(range(first, last + 1))

    return sorted(layers)
