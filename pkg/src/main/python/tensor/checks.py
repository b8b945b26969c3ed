# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    pass


def expect_ndim(name, arr, ndim):
    if arr.ndim != ndim:
        raise ShapeError("{}: expected {}-d tensor, got shape={}".format(name, ndim, arr.shape))


def expect_dim(name, got, expected):
    if got != expected:
        raise ShapeError("{}: dimension mismatch, expected={} got={}".format(name, expected, got))


def ensure_finite(name, arr):
    """ Raises instead of letting a NaN/Inf propagate out of a public op """
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteError("{}: {} non-finite entries in output of shape {}".format(name, bad, np.shape(arr)))
    return arr


def out_size(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1
