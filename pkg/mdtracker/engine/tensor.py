"""Dense tensors with a reverse-mode gradient tape."""

# SPDX-License-Identifier: Apache-2.0

from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from mdtracker.exceptions import ConfigurationError, NumericalError, UsageError
from mdtracker.utils import check_positive, check_type


DEFAULT_DTYPE = np.float32
CHECK_DTYPE = np.float64

ArrayLike = Union[np.ndarray, Sequence, float, int]


class Tensor(object):
    """A dense array of rank <= 4 with an optional gradient buffer.

    Tensors produced by an operation remember their parents and a closure that
    maps the output gradient to parent gradients; `backward()` walks that tape
    in reverse topological order and accumulates into every `grad` buffer that
    requires one.
    """

    __slots__ = ["data", "grad", "requires_grad", "_parents", "_backward", "_op"]

    data: np.ndarray
    grad: Optional[np.ndarray]
    requires_grad: bool

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype=None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
        _op: str = "leaf",
    ) -> None:
        array = np.asarray(data)
        if dtype is not None:
            array = array.astype(dtype, copy=False)
        elif not np.issubdtype(array.dtype, np.floating):
            array = array.astype(DEFAULT_DTYPE)
        if array.ndim > 4:
            raise ConfigurationError(
                f"Tensors have rank <= 4; received shape {array.shape}."
            )

        self.data = array
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype=DEFAULT_DTYPE, requires_grad=False):
        return cls(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad)

    @property
    def dims(self) -> Tuple[int, ...]:
        """Extents in batch x channel x height x width order."""
        return tuple(self.data.shape)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.dims

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(dims={self.dims!r}, "
            f"dtype={self.data.dtype.name}, op={self._op!r}, "
            f"requires_grad={self.requires_grad!r})"
        )

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ConfigurationError(
                f"Gradient shape {grad.shape} does not match tensor shape "
                f"{self.data.shape}."
            )
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def _topological_order(self) -> List["Tensor"]:
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """Propagate `grad` (ones for a single-element tensor) through the tape."""
        if grad is None:
            if self.data.size != 1:
                raise UsageError(
                    "backward() without an explicit gradient needs a scalar output."
                )
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)

        pending = {id(self): grad}
        for node in reversed(self._topological_order()):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node.requires_grad:
                node.accumulate_grad(node_grad)
            if node._backward is not None:
                parent_grads = node._backward(node_grad)
                for parent, parent_grad in zip(node._parents, parent_grads):
                    if parent_grad is None:
                        continue
                    if id(parent) in pending:
                        pending[id(parent)] = pending[id(parent)] + parent_grad
                    else:
                        pending[id(parent)] = parent_grad


def as_tensor(value: Union[Tensor, ArrayLike], dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def check_finite(array: np.ndarray, op: str) -> np.ndarray:
    """Raise NumericalError if the array holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"output shape {array.shape}", op=op)
    return array


def make_result(
    data: np.ndarray,
    parents: Iterable[Tensor],
    backward: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]],
    op: str,
) -> Tensor:
    """Wrap an op's output, recording the tape only if a parent needs it."""
    check_finite(data, op)
    parents = tuple(parents)
    if any(_needs_grad(parent) for parent in parents):
        return Tensor(data, _parents=parents, _backward=backward, _op=op)
    return Tensor(data, _op=op)


def _needs_grad(tensor: Tensor) -> bool:
    return tensor.requires_grad or tensor._backward is not None


class ParamGroup(object):
    """The weights and bias of one layer plus its optimizer state."""

    __slots__ = [
        "name",
        "weights",
        "bias",
        "lr_multiplier",
        "trainable",
        "momentum_buffer_w",
        "momentum_buffer_b",
    ]

    def __init__(
        self,
        name: str,
        weights: ArrayLike,
        bias: ArrayLike,
        lr_multiplier: float = 1.0,
        trainable: bool = True,
        dtype=None,
    ) -> None:
        check_type("name", name, str)
        check_positive("lr_multiplier", lr_multiplier)

        self.name = name
        self.weights = Tensor(weights, requires_grad=True, dtype=dtype)
        self.bias = Tensor(bias, requires_grad=True, dtype=self.weights.dtype)
        if self.bias.data.ndim != 1 or self.bias.data.shape[0] != self.weights.dims[0]:
            raise ConfigurationError(
                f"{name}: bias shape {self.bias.dims} does not match "
                f"{self.weights.dims[0]} output units."
            )
        self.lr_multiplier = float(lr_multiplier)
        self.trainable = trainable
        self.momentum_buffer_w = np.zeros_like(self.weights.data)
        self.momentum_buffer_b = np.zeros_like(self.bias.data)

    @classmethod
    def gaussian(
        cls,
        name: str,
        weight_shape: Sequence[int],
        rng: np.random.Generator,
        std: float,
        dtype=DEFAULT_DTYPE,
    ) -> "ParamGroup":
        """Zero-mean Gaussian weights with the given std and zero biases."""
        weights = rng.normal(0.0, std, size=tuple(weight_shape)).astype(dtype)
        bias = np.zeros(weight_shape[0], dtype=dtype)
        return cls(name, weights, bias)

    @property
    def tensors(self) -> Tuple[Tensor, Tensor]:
        return self.weights, self.bias

    def zero_grad(self) -> None:
        self.weights.zero_grad()
        self.bias.zero_grad()

    def reset_momentum(self) -> None:
        self.momentum_buffer_w = np.zeros_like(self.weights.data)
        self.momentum_buffer_b = np.zeros_like(self.bias.data)

    def astype(self, dtype) -> "ParamGroup":
        """A detached copy with parameters cast to `dtype`."""
        group = ParamGroup(
            self.name,
            self.weights.data.astype(dtype),
            self.bias.data.astype(dtype),
            lr_multiplier=self.lr_multiplier,
            trainable=self.trainable,
        )
        return group

    def copy(self) -> "ParamGroup":
        group = self.astype(self.weights.dtype)
        group.momentum_buffer_w = self.momentum_buffer_w.copy()
        group.momentum_buffer_b = self.momentum_buffer_b.copy()
        return group

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}({self.name!r}, "
            f"weights={self.weights.dims!r}, "
            f"lr_multiplier={self.lr_multiplier!r}, "
            f"trainable={self.trainable!r})"
        )
