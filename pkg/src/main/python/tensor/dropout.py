# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np


def dropout_forward(x, rate, rng, train_mode):
    """
    Inverted dropout: in train mode each entry is zeroed with probability `rate` and the
    survivors are scaled by 1/(1-rate). Eval mode (or rate 0) is the identity and returns
    mask=None.
    """
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1), got {}".format(rate))
    if not train_mode or rate == 0:
        return x, None
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1 - rate)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    if mask is None:
        return grad_out
    return grad_out * mask
