"""Stochastic gradient descent with momentum and weight decay."""

# SPDX-License-Identifier: Apache-2.0

from typing import Iterable

import numpy as np

from mdtracker.config import MOMENTUM, WEIGHT_DECAY
from mdtracker.engine.tensor import check_finite, ParamGroup
from mdtracker.exceptions import UsageError
from mdtracker.utils import check_positive


def sgd_step(
    groups: Iterable[ParamGroup],
    base_lr: float,
    momentum: float = MOMENTUM,
    weight_decay: float = WEIGHT_DECAY,
) -> None:
    """Apply one momentum-SGD update to every trainable group, then clear grads.

    For each parameter p with gradient g and momentum buffer v:

        v <- momentum * v + g + weight_decay * p
        p <- p - base_lr * lr_multiplier * v

    Frozen groups (`trainable=False`) are left untouched; their gradients are
    cleared all the same.
    """
    check_positive("base_lr", base_lr)
    check_positive("momentum", momentum, allow_zero=True)
    check_positive("weight_decay", weight_decay, allow_zero=True)

    groups = list(groups)
    for group in groups:
        if not group.trainable:
            continue
        if group.weights.grad is None or group.bias.grad is None:
            raise UsageError(f"{group.name}: sgd_step called before backward().")

    for group in groups:
        if group.trainable:
            step = base_lr * group.lr_multiplier
            group.momentum_buffer_w = _update(
                group.weights.data,
                group.weights.grad,
                group.momentum_buffer_w,
                step,
                momentum,
                weight_decay,
            )
            group.momentum_buffer_b = _update(
                group.bias.data,
                group.bias.grad,
                group.momentum_buffer_b,
                step,
                momentum,
                weight_decay,
            )
            check_finite(group.weights.data, f"sgd_step[{group.name}]")
        group.zero_grad()


def _update(
    param: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    step: float,
    momentum: float,
    weight_decay: float,
) -> np.ndarray:
    dtype = param.dtype
    velocity = (
        np.asarray(momentum, dtype=dtype) * velocity
        + grad
        + np.asarray(weight_decay, dtype=dtype) * param
    ).astype(dtype, copy=False)
    param -= np.asarray(step, dtype=dtype) * velocity
    return velocity
