# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import ShapeError, expect_ndim, expect_dim, ensure_finite


def linear_forward(x, weights, bias):
    """ x[N,D] @ weights[M,D].T + bias[M] """
    expect_ndim("linear input", x, 2)
    expect_ndim("linear weights", weights, 2)
    expect_dim("linear input features", x.shape[1], weights.shape[1])
    expect_dim("linear bias", bias.shape[0], weights.shape[0])
    return ensure_finite("linear_forward", x @ weights.T + bias)


def linear_backward(grad_out, cached_input, weights):
    """ Returns (grad_input, grad_weights, grad_bias) """
    if grad_out.shape != (cached_input.shape[0], weights.shape[0]):
        raise ShapeError("linear_backward: grad_out expected={} got={}".format(
            (cached_input.shape[0], weights.shape[0]), grad_out.shape))
    grad_input = grad_out @ weights
    grad_weights = grad_out.T @ cached_input
    grad_bias = grad_out.sum(axis=0, dtype=np.float64).astype(grad_out.dtype)
    return ensure_finite("linear_backward", grad_input), ensure_finite("linear_backward", grad_weights), grad_bias
