"""Unit tests for tensors, the gradient tape and parameter groups."""

# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from mdtracker.engine.layers import linear, relu, softmax_cross_entropy
from mdtracker.engine.tensor import as_tensor, ParamGroup, Tensor
from mdtracker.exceptions import ConfigurationError, UsageError


# Happy path tests
def test_integer_data_is_stored_as_float32():
    tensor = Tensor([[1, 2], [3, 4]])
    assert tensor.dtype == np.float32
    assert tensor.dims == (2, 2)
    assert len(tensor) == 2


def test_floating_data_keeps_its_precision():
    assert Tensor(np.zeros(3, dtype=np.float64)).dtype == np.float64


def test_as_tensor_passes_tensors_through():
    tensor = Tensor(np.ones(2))
    assert as_tensor(tensor) is tensor
    assert isinstance(as_tensor([1.0, 2.0]), Tensor)


def test_backward_reaches_every_parameter():
    params = ParamGroup("fc", np.ones((2, 3)), np.zeros(2))
    loss = softmax_cross_entropy(linear(Tensor(np.ones((1, 3))), params), [0])
    loss.backward()
    assert params.weights.grad.shape == (2, 3)
    assert params.bias.grad.shape == (2,)


def test_gradients_accumulate_until_cleared():
    params = ParamGroup("fc", np.ones((2, 3)), np.zeros(2))
    x = Tensor(np.array([[1.0, -2.0, 0.5]]))
    softmax_cross_entropy(linear(x, params), [1]).backward()
    first = params.weights.grad.copy()
    softmax_cross_entropy(linear(x, params), [1]).backward()
    assert np.allclose(params.weights.grad, 2 * first)
    params.zero_grad()
    assert params.weights.grad is None and params.bias.grad is None


def test_backward_through_relu_and_linear():
    x = Tensor(np.array([[2.0]]), requires_grad=True)
    params = ParamGroup("fc", np.array([[1.0], [1.0]]), np.zeros(2))
    out = linear(relu(x), params)
    out.backward(np.array([[1.0, 1.0]]))
    assert x.grad.tolist() == [[2.0]]


def test_param_group_gaussian():
    group = ParamGroup.gaussian("fc4", (8, 16), np.random.default_rng(0), std=0.01)
    assert group.weights.dims == (8, 16)
    assert group.weights.dtype == np.float32
    assert np.all(group.bias.data == 0)
    assert group.trainable and group.lr_multiplier == 1.0


def test_param_group_copy_is_independent():
    group = ParamGroup("fc", np.ones((2, 2)), np.zeros(2), lr_multiplier=0.5)
    group.momentum_buffer_w += 1.0
    copy = group.copy()
    copy.weights.data[0, 0] = 9.0
    assert group.weights.data[0, 0] == 1.0
    assert np.array_equal(copy.momentum_buffer_w, group.momentum_buffer_w)
    assert copy.lr_multiplier == 0.5


def test_param_group_astype():
    group = ParamGroup("fc", np.ones((2, 2)), np.zeros(2), dtype=np.float32)
    assert group.astype(np.float64).weights.dtype == np.float64


def test_reset_momentum():
    group = ParamGroup("fc", np.ones((2, 2)), np.zeros(2))
    group.momentum_buffer_b += 3.0
    group.reset_momentum()
    assert np.all(group.momentum_buffer_b == 0)


def test_repr():
    assert repr(Tensor(np.zeros((1, 2)))).startswith("Tensor(dims=(1, 2)")
    assert "'fc6'" in repr(ParamGroup("fc6", np.zeros((2, 4)), np.zeros(2)))


# Unhappy path tests
def test_rank_above_four_is_rejected():
    with pytest.raises(ConfigurationError):
        Tensor(np.zeros((1, 1, 1, 1, 1)))


def test_backward_of_a_non_scalar_needs_a_gradient():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(UsageError):
        relu(x).backward()


def test_bias_must_match_the_output_units():
    with pytest.raises(ConfigurationError):
        ParamGroup("fc", np.ones((2, 3)), np.zeros(3))


def test_lr_multiplier_must_be_positive():
    with pytest.raises(ConfigurationError):
        ParamGroup("fc", np.ones((2, 3)), np.zeros(2), lr_multiplier=0.0)


def test_gradient_shape_must_match():
    tensor = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ConfigurationError):
        tensor.accumulate_grad(np.ones(3))
