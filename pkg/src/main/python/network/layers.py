# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.activation import relu_forward, relu_backward
from tensor.conv import conv2d_forward, conv2d_backward
from tensor.dropout import dropout_forward, dropout_backward
from tensor.init import xavier_init
from tensor.linear import linear_forward, linear_backward
from tensor.pool import maxpool2d_forward, maxpool2d_backward


class Layer:
    """ One stage of the network. forward() returns (output, cache); backward() consumes the cache. """

    kind = None
    trainable = False

    def forward(self, x, train_mode=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out, cache):
        """ Returns (grad_input, {param_name: grad}) """
        raise NotImplementedError

    def params(self):
        return {}

    def copy(self):
        raise NotImplementedError


class LayerState(Layer):
    """ Layer owning a weight tensor and a bias vector """

    trainable = True

    def __init__(self, weights, bias):
        self.weights = weights
        self.bias = bias

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def set_params(self, weights, bias):
        if weights.shape != self.weights.shape or bias.shape != self.bias.shape:
            raise ValueError("{} parameter shape mismatch: expected={}/{} got={}/{}".format(
                self.kind, self.weights.shape, self.bias.shape, weights.shape, bias.shape))
        self.weights = weights
        self.bias = bias

    @property
    def flat_weights(self):
        """ Neuron weights as rows (kernels flattened for conv) """
        return self.weights.reshape(self.weights.shape[0], -1)


class Conv(LayerState):

    kind = "conv"

    def __init__(self, weights, bias, stride=1, padding=0):
        super().__init__(weights, bias)
        self.stride = stride
        self.padding = padding

    @classmethod
    def create(cls, spec, in_shape, rng, dtype):
        shape = (spec.out_channels, in_shape[0], spec.kernel, spec.kernel)
        return cls(xavier_init(shape, rng, dtype), np.zeros(spec.out_channels, dtype=dtype), spec.stride, spec.padding)

    def forward(self, x, train_mode=False, rng=None):
        return conv2d_forward(x, self.weights, self.bias, self.stride, self.padding), x

    def backward(self, grad_out, cache):
        grad_input, grad_weights, grad_bias = conv2d_backward(grad_out, cache, self.weights, self.stride, self.padding)
        return grad_input, {"weights": grad_weights, "bias": grad_bias}

    def copy(self):
        return Conv(self.weights.copy(), self.bias.copy(), self.stride, self.padding)


class Dense(LayerState):

    kind = "dense"

    @classmethod
    def create(cls, spec, in_shape, rng, dtype):
        shape = (spec.units, in_shape[0])
        return cls(xavier_init(shape, rng, dtype), np.zeros(spec.units, dtype=dtype))

    def forward(self, x, train_mode=False, rng=None):
        return linear_forward(x, self.weights, self.bias), x

    def backward(self, grad_out, cache):
        grad_input, grad_weights, grad_bias = linear_backward(grad_out, cache, self.weights)
        return grad_input, {"weights": grad_weights, "bias": grad_bias}

    def copy(self):
        return Dense(self.weights.copy(), self.bias.copy())


class MaxPool(Layer):

    kind = "maxpool"

    def __init__(self, k, stride):
        self.k = k
        self.stride = stride

    def forward(self, x, train_mode=False, rng=None):
        out, argmax = maxpool2d_forward(x, self.k, self.stride)
        return out, (argmax, x.shape)

    def backward(self, grad_out, cache):
        argmax, shape = cache
        return maxpool2d_backward(grad_out, argmax, shape), {}

    def copy(self):
        return MaxPool(self.k, self.stride)


class Relu(Layer):

    kind = "relu"

    def forward(self, x, train_mode=False, rng=None):
        return relu_forward(x), x

    def backward(self, grad_out, cache):
        return relu_backward(grad_out, cache), {}

    def copy(self):
        return Relu()


class Flatten(Layer):

    kind = "flatten"

    def forward(self, x, train_mode=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache), {}

    def copy(self):
        return Flatten()


class Dropout(Layer):

    kind = "dropout"

    def __init__(self, rate):
        self.rate = rate

    def forward(self, x, train_mode=False, rng=None):
        if train_mode and self.rate > 0 and rng is None:
            raise ValueError("dropout in train mode needs an rng")
        return dropout_forward(x, self.rate, rng, train_mode)

    def backward(self, grad_out, cache):
        return dropout_backward(grad_out, cache), {}

    def copy(self):
        return Dropout(self.rate)


def create_layer(spec, in_shape, rng, dtype):
    if spec.kind == "conv":
        return Conv.create(spec, in_shape, rng, dtype)
    elif spec.kind == "dense":
        return Dense.create(spec, in_shape, rng, dtype)
    elif spec.kind == "maxpool":
        return MaxPool(spec.k, spec.stride)
    elif spec.kind == "relu":
        return Relu()
    elif spec.kind == "flatten":
        return Flatten()
    elif spec.kind == "dropout":
        return Dropout(spec.rate)
    raise ValueError("unknown layer kind {}".format(spec.kind))
