# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import ShapeError, expect_ndim, ensure_finite


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """ Mean -log softmax(logits)[label]; returns (loss, grad_logits) """
    expect_ndim("softmax_cross_entropy logits", logits, 2)
    N, C = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (N,):
        raise ShapeError("softmax_cross_entropy: labels expected=({},) got={}".format(N, labels.shape))
    if N and (labels.min() < 0 or labels.max() >= C):
        raise ValueError("softmax_cross_entropy: labels must be in [0, {}), got range [{}, {}]".format(
            C, labels.min(), labels.max()))

    shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(N)
    loss = float(np.mean(log_norm - shifted[rows, labels]))

    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1
    grad /= N
    ensure_finite("softmax_cross_entropy", grad)
    return loss, grad.astype(logits.dtype, copy=False)
