"""Unit tests for finite-difference gradient checking."""

# SPDX-License-Identifier: Apache-2.0

import numpy as np
import pytest

from mdtracker.engine.gradcheck import (
    finite_difference_check,
    GRADIENT_CASES,
    GradCheckReport,
    run_gradient_suite,
)
from mdtracker.engine.layers import flatten
from mdtracker.engine.tensor import make_result, Tensor
from mdtracker.exceptions import ConfigurationError


# Helper functions
def doubled_backward_op(x: Tensor):
    """An identity op whose recorded gradient is deliberately twice too large."""

    def op():
        return make_result(x.data.copy(), (x,), lambda grad: (2.0 * grad,), "bad")

    return op


# Happy path tests
def test_every_op_passes_its_gradient_check():
    reports = run_gradient_suite(shapes_per_op=2)
    assert len(reports) == 2 * len(GRADIENT_CASES)
    failures = [str(report) for report in reports if not report.passed]
    assert not failures, failures


@pytest.mark.parametrize("op", sorted(GRADIENT_CASES))
def test_each_op_with_another_seed(op):
    for report in run_gradient_suite(ops=[op], seed=7, shapes_per_op=1):
        assert report.passed, str(report)


def test_identity_op_gradients_match():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 2, 2)), dtype=np.float64)
    report = finite_difference_check(lambda: flatten(x), [x], name="flatten")
    assert report.passed
    assert report.num_checked == x.data.size
    assert report.max_relative_error < 1e-6


def test_a_wrong_gradient_is_detected():
    x = Tensor(np.random.default_rng(0).standard_normal((3, 4)), dtype=np.float64)
    report = finite_difference_check(doubled_backward_op(x), [x], name="bad")
    assert not report.passed
    assert report.max_relative_error == pytest.approx(1.0 / 3.0, rel=1e-3)
    assert "FAILED" in str(report)


def test_inputs_are_restored_after_checking():
    values = np.random.default_rng(1).standard_normal((2, 5))
    x = Tensor(values.copy(), dtype=np.float64)
    finite_difference_check(lambda: flatten(x), [x])
    assert np.array_equal(x.data, values)
    assert x.grad is None


def test_report_string():
    report = GradCheckReport("relu[0]", 1e-9, 1e-12, 10, 1e-4)
    assert str(report).startswith("relu[0]: ok max_rel_err=")


# Unhappy path tests
def test_32_bit_inputs_are_rejected():
    x = Tensor(np.ones((2, 2), dtype=np.float32))
    with pytest.raises(ConfigurationError):
        finite_difference_check(lambda: flatten(x), [x])


def test_unknown_ops_are_rejected():
    with pytest.raises(ConfigurationError):
        run_gradient_suite(ops=["relu", "softplus"])
