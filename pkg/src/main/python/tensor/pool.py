# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import ShapeError, expect_ndim, ensure_finite, out_size
from tensor.im2col import im2col


def maxpool2d_forward(x, k, stride):
    """
    Max over k x k windows. Returns (output, argmax_index) where argmax_index holds, for
    each output cell, the flat position of the winner inside x; ties go to the first
    element in scan order.
    """
    expect_ndim("maxpool2d input", x, 4)
    N, C, H, W = x.shape
    if k > H or k > W:
        raise ShapeError("maxpool2d: window {} larger than input {}x{}".format(k, H, W))
    out_h, out_w = out_size(H, k, stride, 0), out_size(W, k, stride, 0)

    cols = im2col(x.reshape(N * C, 1, H, W), k, k, stride, 0)
    local = np.argmax(cols, axis=1)
    out = cols[np.arange(cols.shape[0]), local].reshape(N, C, out_h, out_w)

    # local window offset -> flat index into x
    local = local.reshape(N * C, out_h, out_w)
    rows = np.arange(out_h)[:, None] * stride + local // k
    cols_ = np.arange(out_w)[None, :] * stride + local % k
    plane = np.arange(N * C)[:, None, None] * (H * W)
    argmax_index = (plane + rows * W + cols_).reshape(N, C, out_h, out_w)

    return ensure_finite("maxpool2d_forward", out), argmax_index


def maxpool2d_backward(grad_out, argmax_index, input_shape):
    if grad_out.shape != argmax_index.shape:
        raise ShapeError("maxpool2d_backward: grad_out={} argmax={}".format(grad_out.shape, argmax_index.shape))
    size = int(np.prod(input_shape))
    if argmax_index.size and (argmax_index.min() < 0 or argmax_index.max() >= size):
        raise IndexError("maxpool2d_backward: argmax index out of bounds for input shape {}".format(input_shape))

    grad_input = np.zeros(size, dtype=grad_out.dtype)
    # overlapping windows may share a winner
    np.add.at(grad_input, argmax_index.ravel(), grad_out.ravel())
    return ensure_finite("maxpool2d_backward", grad_input.reshape(input_shape))
