# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import ShapeError, expect_ndim, expect_dim, ensure_finite, out_size
from tensor.im2col import im2col, col2im


def _check_conv(x, weights, bias):
    expect_ndim("conv2d input", x, 4)
    expect_ndim("conv2d weights", weights, 4)
    expect_dim("conv2d channels", x.shape[1], weights.shape[1])
    if bias is not None:
        expect_ndim("conv2d bias", bias, 1)
        expect_dim("conv2d bias", bias.shape[0], weights.shape[0])


def conv2d_forward(x, weights, bias, stride=1, padding=0):
    """ x[N,C,H,W] * weights[K,C,kh,kw] + bias[K] -> [N,K,H',W'], zero padding """
    _check_conv(x, weights, bias)
    N, _, H, W = x.shape
    K, _, kh, kw = weights.shape

    cols = im2col(x, kh, kw, stride, padding)
    out = cols @ weights.reshape(K, -1).T
    if bias is not None:
        out += bias
    out_h, out_w = out_size(H, kh, stride, padding), out_size(W, kw, stride, padding)
    out = out.reshape(N, out_h, out_w, K).transpose(0, 3, 1, 2)
    return ensure_finite("conv2d_forward", np.ascontiguousarray(out))


def conv2d_backward(grad_out, cached_input, weights, stride=1, padding=0):
    """ Returns (grad_input, grad_weights, grad_bias) for conv2d_forward """
    _check_conv(cached_input, weights, None)
    N, C, H, W = cached_input.shape
    K, _, kh, kw = weights.shape
    out_h, out_w = out_size(H, kh, stride, padding), out_size(W, kw, stride, padding)
    if grad_out.shape != (N, K, out_h, out_w):
        raise ShapeError("conv2d_backward: grad_out expected={} got={}".format((N, K, out_h, out_w), grad_out.shape))

    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, K)
    cols = im2col(cached_input, kh, kw, stride, padding)

    grad_weights = (g.T @ cols).reshape(weights.shape)
    grad_bias = g.sum(axis=0, dtype=np.float64).astype(grad_out.dtype)
    grad_input = col2im(g @ weights.reshape(K, -1), cached_input.shape, kh, kw, stride, padding)

    ensure_finite("conv2d_backward", grad_input)
    ensure_finite("conv2d_backward", grad_weights)
    return grad_input, grad_weights, grad_bias
