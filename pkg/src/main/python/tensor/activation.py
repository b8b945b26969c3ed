# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import ShapeError, ensure_finite

ACTIVATIONS = ("relu", "linear")


def relu_forward(x):
    return ensure_finite("relu_forward", np.maximum(x, 0).astype(x.dtype, copy=False))


def relu_backward(grad_out, cached_x):
    if grad_out.shape != cached_x.shape:
        raise ShapeError("relu_backward: grad_out={} cached={}".format(grad_out.shape, cached_x.shape))
    # subgradient at 0 is 0
    return np.where(cached_x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def apply_activation(name, y):
    """ f in the Hebbian rule """
    if name == "relu":
        return np.maximum(y, 0)
    elif name == "linear":
        return y
    raise ValueError("unknown activation {}, expected one of {}".format(name, ACTIVATIONS))
