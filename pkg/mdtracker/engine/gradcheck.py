"""Finite-difference gradient checking."""

# SPDX-License-Identifier: Apache-2.0

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mdtracker.engine.layers import (
    conv2d,
    conv_output_size,
    dropout,
    flatten,
    linear,
    local_response_norm,
    maxpool2d,
    relu,
    softmax_cross_entropy,
)
from mdtracker.engine.tensor import CHECK_DTYPE, ParamGroup, Tensor
from mdtracker.exceptions import ConfigurationError


logger = logging.getLogger(__name__)


EPSILON = 1e-5
TOLERANCE = 1e-4
ERROR_FLOOR = 1e-4
SHAPES_PER_OP = 5


@dataclass(frozen=True)
class GradCheckReport:
    """Largest discrepancy between analytic and central-difference gradients."""

    op: str
    max_relative_error: float
    max_absolute_error: float
    num_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAILED"
        return (
            f"{self.op}: {status} max_rel_err={self.max_relative_error:.3e} "
            f"max_abs_err={self.max_absolute_error:.3e} checked={self.num_checked}"
        )


def finite_difference_check(
    op: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    epsilon: float = EPSILON,
    tolerance: float = TOLERANCE,
    rng: Optional[np.random.Generator] = None,
    name: str = "op",
) -> GradCheckReport:
    """Compare `op`'s analytic gradients to central differences.

    `op` is re-evaluated with each element of each input nudged by
    +/- `epsilon`, so it must be deterministic and read its inputs' `data` on
    every call. Non-scalar outputs are reduced with a fixed random projection.
    All inputs must be 64-bit.
    """
    for tensor in inputs:
        if tensor.dtype != CHECK_DTYPE:
            raise ConfigurationError(
                f"Gradient checks run in 64-bit mode; received {tensor.dtype}."
            )
    rng = rng if rng is not None else np.random.default_rng(0)

    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()

    output = op()
    projection = (
        np.ones_like(output.data)
        if output.data.size == 1
        else rng.standard_normal(output.dims).astype(CHECK_DTYPE)
    )
    output.backward(projection)
    analytic = [
        tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        for tensor in inputs
    ]

    def objective() -> float:
        return float(np.sum(op().data * projection))

    max_relative = 0.0
    max_absolute = 0.0
    checked = 0
    for tensor, grad in zip(inputs, analytic):
        flat = tensor.data.reshape(-1)
        grad = grad.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + epsilon
            f_plus = objective()
            flat[index] = original - epsilon
            f_minus = objective()
            flat[index] = original

            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            absolute = abs(numeric - grad[index])
            relative = absolute / max(abs(numeric) + abs(grad[index]), ERROR_FLOOR)
            max_absolute = max(max_absolute, absolute)
            max_relative = max(max_relative, relative)
            checked += 1

    for tensor in inputs:
        tensor.zero_grad()

    return GradCheckReport(
        op=name,
        max_relative_error=max_relative,
        max_absolute_error=max_absolute,
        num_checked=checked,
        tolerance=tolerance,
    )


# Randomized cases for every differentiable op
def _params(name, weight_shape, rng) -> ParamGroup:
    weights = rng.standard_normal(weight_shape)
    bias = rng.standard_normal(weight_shape[0])
    return ParamGroup(name, weights, bias, dtype=CHECK_DTYPE)


def _input(shape, rng) -> Tensor:
    return Tensor(rng.standard_normal(shape), dtype=CHECK_DTYPE)


def conv2d_case(rng: np.random.Generator) -> Tuple[Callable[[], Tensor], List[Tensor]]:
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 5))
    size = int(rng.integers(5, 10))
    f = int(rng.integers(1, 9))
    k = int(rng.choice([1, 3, 5]))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    x = _input((n, c, size, size), rng)
    params = _params("conv", (f, c, k, k), rng)
    return (
        lambda: conv2d(x, params, stride=stride, pad=pad),
        [x, params.weights, params.bias],
    )


def maxpool2d_case(rng: np.random.Generator):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    size = int(rng.integers(4, 9))
    k = int(rng.integers(2, 4))
    stride = int(rng.integers(1, 3))
    # Well-separated distinct values keep every window's argmax stable under +/- eps.
    count = n * c * size * size
    values = rng.permutation(count) * 0.01 + rng.uniform(-0.001, 0.001, count)
    x = Tensor(values.reshape(n, c, size, size), dtype=CHECK_DTYPE)
    return lambda: maxpool2d(x, k, stride), [x]


def relu_case(rng: np.random.Generator):
    shape = (int(rng.integers(1, 4)), int(rng.integers(2, 20)))
    values = rng.standard_normal(shape)
    values = np.where(np.abs(values) < 0.01, 0.5, values)
    x = Tensor(values, dtype=CHECK_DTYPE)
    return lambda: relu(x), [x]


def linear_case(rng: np.random.Generator):
    batch = int(rng.integers(1, 8))
    features_in = int(rng.integers(1, 16))
    features_out = int(rng.integers(1, 10))
    x = _input((batch, features_in), rng)
    params = _params("fc", (features_out, features_in), rng)
    return lambda: linear(x, params), [x, params.weights, params.bias]


def flatten_case(rng: np.random.Generator):
    x = _input(tuple(int(v) for v in rng.integers(1, 4, size=4)), rng)
    return lambda: flatten(x), [x]


def dropout_case(rng: np.random.Generator):
    x = _input((int(rng.integers(1, 5)), int(rng.integers(2, 16))), rng)
    rate = float(rng.uniform(0.1, 0.9))
    seed = int(rng.integers(0, 2**31))
    return (
        lambda: dropout(x, rate, train_mode=True, rng=np.random.default_rng(seed)),
        [x],
    )


def lrn_case(rng: np.random.Generator):
    shape = (
        int(rng.integers(1, 3)),
        int(rng.integers(1, 9)),
        int(rng.integers(1, 5)),
        int(rng.integers(1, 5)),
    )
    x = Tensor(rng.standard_normal(shape) * 5.0, dtype=CHECK_DTYPE)
    # A large alpha makes the cross-channel coupling visible to the check.
    return lambda: local_response_norm(x, alpha=0.5), [x]


def softmax_cross_entropy_case(rng: np.random.Generator):
    batch = int(rng.integers(1, 17))
    logits = _input((batch, 2), rng)
    labels = rng.integers(0, 2, size=batch)
    return lambda: softmax_cross_entropy(logits, labels), [logits]


def conv_stack_case(rng: np.random.Generator):
    """conv -> relu -> pool -> flatten -> linear, as chained in the network."""
    c = int(rng.integers(1, 4))
    size = int(rng.integers(7, 10))
    x = _input((2, c, size, size), rng)
    conv = _params("conv", (3, c, 3, 3), rng)
    pooled = conv_output_size(conv_output_size(size, 3, 1), 2, 2)
    fc = _params("fc", (2, 3 * pooled * pooled), rng)
    labels = np.array([0, 1])

    def op():
        hidden = maxpool2d(relu(conv2d(x, conv, stride=1)), 2, 2)
        return softmax_cross_entropy(linear(flatten(hidden), fc), labels)

    return op, [conv.weights, conv.bias, fc.weights, fc.bias]


GRADIENT_CASES: Dict[str, Callable[[np.random.Generator], tuple]] = {
    "conv2d": conv2d_case,
    "maxpool2d": maxpool2d_case,
    "relu": relu_case,
    "linear": linear_case,
    "flatten": flatten_case,
    "dropout": dropout_case,
    "lrn": lrn_case,
    "softmax_cross_entropy": softmax_cross_entropy_case,
    "conv_stack": conv_stack_case,
}


def run_gradient_suite(
    ops: Optional[Iterable[str]] = None,
    seed: int = 0,
    shapes_per_op: int = SHAPES_PER_OP,
    epsilon: float = EPSILON,
    tolerance: float = TOLERANCE,
) -> List[GradCheckReport]:
    """Check every registered op (or the named subset) on randomized shapes."""
    names = list(GRADIENT_CASES) if ops is None else list(ops)
    unknown = [name for name in names if name not in GRADIENT_CASES]
    if unknown:
        raise ConfigurationError(
            f"Unknown gradient-check ops {unknown!r}. "
            f"Valid ops: {sorted(GRADIENT_CASES)}"
        )

    rng = np.random.default_rng(seed)
    reports = []
    for name in names:
        for trial in range(shapes_per_op):
            op, inputs = GRADIENT_CASES[name](rng)
            report = finite_difference_check(
                op,
                inputs,
                epsilon=epsilon,
                tolerance=tolerance,
                rng=rng,
                name=f"{name}[{trial}]",
            )
            logger.info("%s", report)
            reports.append(report)
    return reports
