# SPDX-License-Identifier: GPL-2.0-or-later
"""
Nonlinear Hebbian PCA.

For neuron i with weights w_i, input x and output y_i = w_i.x:

    dw_i = eta * f(y_i) * (x - sum_{j<=i} f(y_j) * w_j)

The sum for neuron i includes neuron i itself; neuron order is the weight-row order.
With f linear and a single neuron this is Oja's rule, with several neurons Sanger's.
"""
from dataclasses import dataclass

import numpy as np

from tensor.activation import ACTIVATIONS, apply_activation
from tensor.checks import ShapeError, expect_ndim, expect_dim, ensure_finite
from tensor.im2col import im2col


@dataclass
class HpcaConfig:
    eta: float = 1e-3
    activation: str = "relu"
    batch_aggregation: str = "mean"
    epochs: int = 20
    train_biases: bool = False
    batch_size: int = 64
    include_dense: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0, got {}".format(self.eta))
        if self.activation not in ACTIVATIONS:
            raise ValueError("activation must be one of {}, got {}".format(ACTIVATIONS, self.activation))
        if self.batch_aggregation != "mean":
            raise ValueError("only mean batch aggregation is supported, got {}".format(self.batch_aggregation))
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1, got {}/{}".format(self.epochs, self.batch_size))


class HpcaLayerStats:
    """ Epoch-level representation error and per-neuron weight norms of one layer """

    def __init__(self, layer_index):
        self.layer_index = layer_index
        self.representation_error = []
        self.weight_norms = []

    def __repr__(self):
        return "HpcaLayerStats(layer={}, error={})".format(self.layer_index, self.representation_error)


def hpca_delta(weights, x, activation):
    """ Unscaled update for one input vector; rows via a cumulative sum, O(M*D) """
    expect_ndim("hpca_delta weights", weights, 2)
    expect_ndim("hpca_delta input", x, 1)
    expect_dim("hpca_delta input", x.shape[0], weights.shape[1])

    w = weights.astype(np.float64)
    fy = apply_activation(activation, w @ x.astype(np.float64))
    recon = np.cumsum(fy[:, None] * w, axis=0)
    return ensure_finite("hpca_delta", fy[:, None] * (x - recon))


def mean_hpca_delta(weights, samples, activation):
    """
    Mean of hpca_delta over the rows of samples[P,D], all against the same weights.

    mean_p f_p,i * (x_p - sum_{j<=i} f_p,j w_j) = (F^T X - tril(F^T F) W)_i / P
    """
    expect_ndim("hpca weights", weights, 2)
    expect_ndim("hpca samples", samples, 2)
    expect_dim("hpca sample size", samples.shape[1], weights.shape[1])
    if samples.shape[0] == 0:
        raise ShapeError("hpca: empty batch")

    w = weights.astype(np.float64)
    x = samples.astype(np.float64)
    f = apply_activation(activation, x @ w.T)
    delta = (f.T @ x - np.tril(f.T @ f) @ w) / x.shape[0]
    return ensure_finite("hpca_delta", delta)


def representation_error(weights, batch, activation):
    """ Batch mean of 1/2 |x - sum_j f(y_j) w_j|^2 over the whole layer """
    expect_ndim("representation_error weights", weights, 2)
    if batch.ndim == 1:
        batch = batch[None, :]
    expect_dim("representation_error input", batch.shape[1], weights.shape[1])
    if batch.shape[0] == 0:
        return 0.0

    w = weights.astype(np.float64)
    x = batch.astype(np.float64)
    residual = x - apply_activation(activation, x @ w.T) @ w
    return float(0.5 * np.mean(np.sum(residual * residual, axis=1)))


def _with_bias(layer, samples, cfg):
    """ Neuron rows and inputs; trained biases ride along as the weight of a constant 1 input """
    weights = layer.flat_weights
    if not cfg.train_biases:
        return weights, samples
    ones = np.ones((samples.shape[0], 1), dtype=samples.dtype)
    return np.hstack([weights, layer.bias[:, None]]), np.hstack([samples, ones])


def layer_samples(layer, inputs):
    """ Input vectors seen by the layer's neurons: rows for dense, im2col patches for conv """
    if layer.kind == "conv":
        _, _, kh, kw = layer.weights.shape
        return im2col(inputs, kh, kw, layer.stride, layer.padding)
    elif layer.kind == "dense":
        expect_ndim("hpca dense input", inputs, 2)
        return inputs
    raise ShapeError("hpca: layer kind {} has no weights".format(layer.kind))


def layer_delta(layer, inputs, cfg):
    """ eta-scaled update (weights, bias or None) for one batch of layer inputs """
    weights, samples = _with_bias(layer, layer_samples(layer, inputs), cfg)
    delta = cfg.eta * mean_hpca_delta(weights, samples, cfg.activation)
    if cfg.train_biases:
        return delta[:, :-1].reshape(layer.weights.shape), delta[:, -1]
    return delta.reshape(layer.weights.shape), None


def apply_delta(layer, delta):
    dw, db = delta
    layer.weights += dw.astype(layer.weights.dtype)
    if db is not None:
        layer.bias += db.astype(layer.bias.dtype)
    ensure_finite("hpca update", layer.weights)


def layer_representation_error(layer, inputs, cfg):
    weights, samples = _with_bias(layer, layer_samples(layer, inputs), cfg)
    return representation_error(weights, samples, cfg.activation)


def hpca_update_dense(layer, batch, cfg):
    """ weights += eta * mean over the batch of hpca_delta; updates the layer in place and returns it """
    if layer.kind != "dense":
        raise ShapeError("hpca_update_dense: expected a dense layer, got {}".format(layer.kind))
    apply_delta(layer, layer_delta(layer, batch, cfg))
    return layer


def hpca_update_conv(layer, input_batch, cfg):
    """ Every im2col patch of the batch is one input vector; kernels are the neurons """
    if layer.kind != "conv":
        raise ShapeError("hpca_update_conv: expected a conv layer, got {}".format(layer.kind))
    expect_ndim("hpca_update_conv input", input_batch, 4)
    apply_delta(layer, layer_delta(layer, input_batch, cfg))
    return layer


def oja_delta(w, x):
    """ Oja's single-neuron linear rule: y (x - y w) """
    y = float(w @ x)
    return y * (x - y * w)


def sanger_delta(weights, x):
    """ Sanger's linear rule, neuron by neuron """
    out = np.zeros_like(weights, dtype=np.float64)
    y = weights @ x
    for i in range(weights.shape[0]):
        acc = np.zeros_like(x, dtype=np.float64)
        for j in range(i + 1):
            acc += y[j] * weights[j]
        out[i] = y[i] * (x - acc)
    return out
