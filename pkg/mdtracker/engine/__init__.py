"""Dense tensors, differentiable layers, SGD and gradient checking."""

# SPDX-License-Identifier: Apache-2.0

from mdtracker.engine.gradcheck import (  # noqa: F401
    finite_difference_check,
    GradCheckReport,
    run_gradient_suite,
)
from mdtracker.engine.layers import (  # noqa: F401
    conv2d,
    conv_output_size,
    dropout,
    flatten,
    linear,
    local_response_norm,
    maxpool2d,
    positive_score,
    relu,
    softmax,
    softmax_cross_entropy,
)
from mdtracker.engine.optim import sgd_step  # noqa: F401
from mdtracker.engine.tensor import (  # noqa: F401
    CHECK_DTYPE,
    DEFAULT_DTYPE,
    ParamGroup,
    Tensor,
)
