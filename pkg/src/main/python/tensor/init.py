# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np


def fans(shape):
    """
    Dense weights[M,D]: fan_in = D, fan_out = M.
    Conv weights[K,C,kh,kw]: fan_in = C*kh*kw, fan_out = K*kh*kw.
    """
    if len(shape) == 2:
        return shape[1], shape[0]
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        return shape[1] * receptive, shape[0] * receptive
    raise ValueError("xavier_init: unsupported weight shape {}".format(shape))


def xavier_bound(shape):
    fan_in, fan_out = fans(shape)
    return np.sqrt(6.0 / (fan_in + fan_out))


def xavier_init(shape, rng, dtype=np.float32):
    bound = xavier_bound(shape)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
