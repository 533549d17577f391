"""Differentiable operations for the tracking network."""

# SPDX-License-Identifier: Apache-2.0

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from mdtracker.config import (
    BACKGROUND_LABEL,
    LRN_ALPHA,
    LRN_BETA,
    LRN_K,
    LRN_SIZE,
    TARGET_LABEL,
)
from mdtracker.engine.tensor import _needs_grad, make_result, ParamGroup, Tensor
from mdtracker.exceptions import ConfigurationError, InputError, ShapeError


def conv_output_size(size: int, kernel: int, stride: int, pad: int = 0) -> int:
    """Spatial extent of a convolution or pooling output."""
    return (size + 2 * pad - kernel) // stride + 1


def _require_rank(x: Tensor, rank: int, op: str) -> None:
    if x.data.ndim != rank:
        raise ShapeError(f"{op} expects a rank-{rank} input; received {x.dims}.")


def _windows(array: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """A (N, C, Ho, Wo, k, k) strided view of every kernel window."""
    view = sliding_window_view(array, (kernel, kernel), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


def conv2d(x: Tensor, params: ParamGroup, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation of an N x C x H x W input with F x C x k x k filters."""
    _require_rank(x, 4, "conv2d")
    weights = params.weights.data
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise ConfigurationError(
            f"{params.name}: conv2d needs square F x C x k x k filters; "
            f"received {weights.shape}."
        )
    n, c, h, w = x.dims
    f, kc, k, _ = weights.shape
    if kc != c:
        raise ConfigurationError(
            f"{params.name}: kernel expects {kc} input channels; input has {c}."
        )
    if stride < 1 or pad < 0:
        raise ConfigurationError(
            f"conv2d needs stride >= 1 and pad >= 0; received {stride}, {pad}."
        )
    if k > h + 2 * pad or k > w + 2 * pad:
        raise ShapeError(
            f"{params.name}: {k}x{k} kernel exceeds padded input {h}x{w} (pad {pad})."
        )

    dtype = x.data.dtype
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    out_h = conv_output_size(h, k, stride, pad)
    out_w = conv_output_size(w, k, stride, pad)
    cols = _windows(padded, k, stride)
    kernel = weights.astype(dtype, copy=False)
    out = np.tensordot(cols, kernel, axes=([1, 4, 5], [1, 2, 3]))
    bias = params.bias.data.astype(dtype)
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    out = np.ascontiguousarray(out, dtype=dtype)

    def backward(grad: np.ndarray):
        grad_w = np.tensordot(grad, cols, axes=([0, 2, 3], [0, 2, 3]))
        grad_b = grad.sum(axis=(0, 2, 3))
        grad_x = None
        if _needs_grad(x):
            grad_cols = np.tensordot(grad, weights, axes=([1], [0]))  # N,Ho,Wo,C,k,k
            grad_padded = np.zeros_like(padded)
            for i in range(k):
                for j in range(k):
                    grad_padded[
                        :,
                        :,
                        i : i + stride * (out_h - 1) + 1 : stride,
                        j : j + stride * (out_w - 1) + 1 : stride,
                    ] += grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            grad_x = grad_padded
            if pad:
                grad_x = grad_padded[:, :, pad : pad + h, pad : pad + w]
        return grad_x, grad_w, grad_b

    return make_result(out, (x, params.weights, params.bias), backward, "conv2d")


def maxpool2d(x: Tensor, k: int, stride: int) -> Tensor:
    """Max pooling; the gradient goes to the first maximal element of each window."""
    _require_rank(x, 4, "maxpool2d")
    n, c, h, w = x.dims
    if k < 1 or stride < 1:
        raise ConfigurationError(
            f"maxpool2d needs k, stride >= 1; received {k}, {stride}."
        )
    if k > h or k > w:
        raise ShapeError(f"maxpool2d window {k} exceeds input extent {h}x{w}.")

    out_h = conv_output_size(h, k, stride)
    out_w = conv_output_size(w, k, stride)
    windows = _windows(x.data, k, stride).reshape(n, c, out_h, out_w, k * k)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(grad: np.ndarray):
        grad_x = np.zeros_like(x.data)
        for i in range(k):
            for j in range(k):
                routed = np.where(argmax == i * k + j, grad, 0)
                grad_x[
                    :,
                    :,
                    i : i + stride * (out_h - 1) + 1 : stride,
                    j : j + stride * (out_w - 1) + 1 : stride,
                ] += routed
        return (grad_x,)

    return make_result(np.ascontiguousarray(out), (x,), backward, "maxpool2d")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.data.dtype, copy=False)

    def backward(grad: np.ndarray):
        return (np.where(mask, grad, 0).astype(grad.dtype, copy=False),)

    return make_result(out, (x,), backward, "relu")


def flatten(x: Tensor) -> Tensor:
    """Reshape N x ... to N x features."""
    shape = x.dims
    out = x.data.reshape(shape[0], -1)

    def backward(grad: np.ndarray):
        return (grad.reshape(shape),)

    return make_result(out, (x,), backward, "flatten")


def linear(x: Tensor, params: ParamGroup) -> Tensor:
    """Fully connected layer: x @ W.T + b with W of shape out x in."""
    _require_rank(x, 2, "linear")
    weights = params.weights.data
    if weights.ndim != 2 or weights.shape[1] != x.dims[1]:
        raise ConfigurationError(
            f"{params.name}: layer expects {weights.shape[-1]} input features; "
            f"input has {x.dims[1]}."
        )
    dtype = x.data.dtype
    weights = weights.astype(dtype, copy=False)
    out = x.data @ weights.T + params.bias.data.astype(dtype)

    def backward(grad: np.ndarray):
        grad_x = grad @ weights if _needs_grad(x) else None
        return grad_x, grad.T @ x.data, grad.sum(axis=0)

    return make_result(out, (x, params.weights, params.bias), backward, "linear")


def dropout(
    x: Tensor,
    rate: float,
    train_mode: bool,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Inverted dropout; the identity in eval mode or at rate 0."""
    if not 0 <= rate < 1:
        raise ConfigurationError(f"dropout rate must be in [0, 1); received {rate!r}.")
    if not train_mode or rate == 0:
        return x
    if rng is None:
        raise ConfigurationError("dropout in train mode needs a random generator.")

    keep = rng.random(x.dims) >= rate
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.data.dtype)
    mask = keep.astype(x.data.dtype) * scale
    out = x.data * mask

    def backward(grad: np.ndarray):
        return (grad * mask,)

    return make_result(out, (x,), backward, "dropout")


def local_response_norm(
    x: Tensor,
    size: int = LRN_SIZE,
    k: float = LRN_K,
    alpha: float = LRN_ALPHA,
    beta: float = LRN_BETA,
) -> Tensor:
    """Cross-channel normalization y = x * (k + alpha/size * sum(x^2))^-beta."""
    _require_rank(x, 4, "local_response_norm")
    half = size // 2

    def window_sum(values: np.ndarray) -> np.ndarray:
        padded = np.pad(values, ((0, 0), (half, half), (0, 0), (0, 0)))
        cumulative = np.cumsum(padded, axis=1)
        cumulative = np.concatenate(
            [np.zeros_like(cumulative[:, :1]), cumulative], axis=1
        )
        channels = values.shape[1]
        return cumulative[:, size : size + channels] - cumulative[:, :channels]

    scale = k + (alpha / size) * window_sum(x.data * x.data)
    out = x.data * scale ** (-beta)

    def backward(grad: np.ndarray):
        direct = grad * scale ** (-beta)
        coupled = window_sum(grad * x.data * scale ** (-beta - 1))
        return (direct - (2.0 * alpha * beta / size) * x.data * coupled,)

    return make_result(out.astype(x.data.dtype, copy=False), (x,), backward, "lrn")


def softmax(logits: Union[Tensor, np.ndarray]) -> np.ndarray:
    """Row-wise softmax probabilities (not recorded on the tape)."""
    values = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    shifted = values - values.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def positive_score(logits: Union[Tensor, np.ndarray]) -> np.ndarray:
    """f+: the softmax probability of the target class for each row."""
    return softmax(logits)[:, TARGET_LABEL]


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of target/background labels."""
    _require_rank(logits, 2, "softmax_cross_entropy")
    batch, classes = logits.dims
    if classes != 2:
        raise ShapeError(
            f"softmax_cross_entropy expects 2 classes; received {classes}."
        )
    if batch < 1:
        raise ShapeError("softmax_cross_entropy needs a non-empty batch.")
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise InputError(f"Expected {batch} labels; received shape {labels.shape}.")
    if not np.all(np.isin(labels, (TARGET_LABEL, BACKGROUND_LABEL))):
        raise InputError(f"Labels must be 0 or 1; received {np.unique(labels)!r}.")
    labels = labels.astype(np.int64)

    values = logits.data
    shifted = values - values.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[np.arange(batch), labels].mean()
    probs = np.exp(log_probs)

    def backward(grad: np.ndarray):
        delta = probs.copy()
        delta[np.arange(batch), labels] -= 1.0
        return ((delta / batch * grad).astype(values.dtype, copy=False),)

    loss = np.asarray(loss, dtype=values.dtype)
    return make_result(loss, (logits,), backward, "softmax_cross_entropy")


def output_shape(
    size: int, layers: Sequence[Tuple[str, int, int]]
) -> Tuple[int, ...]:
    """Spatial extents after each (kind, kernel, stride) stage, starting at `size`."""
    extents = [size]
    for _, kernel, stride in layers:
        extents.append(conv_output_size(extents[-1], kernel, stride))
    return tuple(extents)
