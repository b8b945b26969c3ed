# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import ShapeError, expect_ndim, out_size


def _check_window(shape, kh, kw, stride, padding):
    _, _, H, W = shape
    if stride < 1:
        raise ShapeError("stride must be >= 1, got {}".format(stride))
    if padding < 0:
        raise ShapeError("padding must be >= 0, got {}".format(padding))
    if kh > H + 2 * padding or kw > W + 2 * padding:
        raise ShapeError("window {}x{} larger than padded input {}x{}".format(
            kh, kw, H + 2 * padding, W + 2 * padding))
    return out_size(H, kh, stride, padding), out_size(W, kw, stride, padding)


def im2col(x, kh, kw, stride=1, padding=0):
    """
    Unfolds every receptive field of x[N,C,H,W] into one row.

    Row p = (n, i, j) in row-major order over (N, H', W'); columns are ordered (c, a, b),
    matching weights.reshape(K, C*kh*kw).
    """
    expect_ndim("im2col", x, 4)
    N, C, H, W = x.shape
    out_h, out_w = _check_window(x.shape, kh, kw, stride, padding)

    img = np.pad(x, [(0, 0), (0, 0), (padding, padding), (padding, padding)], "constant")
    col = np.empty((N, C, kh, kw, out_h, out_w), dtype=x.dtype)
    for a in range(kh):
        a_max = a + stride * out_h
        for b in range(kw):
            b_max = b + stride * out_w
            col[:, :, a, b, :, :] = img[:, :, a:a_max:stride, b:b_max:stride]

    return col.transpose(0, 4, 5, 1, 2, 3).reshape(N * out_h * out_w, C * kh * kw)


def col2im(cols, input_shape, kh, kw, stride=1, padding=0):
    """ Adjoint of im2col: scatters rows back, summing overlapping contributions """
    N, C, H, W = input_shape
    out_h, out_w = _check_window(input_shape, kh, kw, stride, padding)
    if cols.shape != (N * out_h * out_w, C * kh * kw):
        raise ShapeError("col2im: expected={} got={}".format((N * out_h * out_w, C * kh * kw), cols.shape))

    col = cols.reshape(N, out_h, out_w, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((N, C, H + 2 * padding + stride - 1, W + 2 * padding + stride - 1), dtype=cols.dtype)
    for a in range(kh):
        a_max = a + stride * out_h
        for b in range(kw):
            b_max = b + stride * out_w
            img[:, :, a:a_max:stride, b:b_max:stride] += col[:, :, a, b, :, :]

    return img[:, :, padding:H + padding, padding:W + padding]
