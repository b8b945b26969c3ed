# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from network.config import ConfigError, NetworkConfig, LayerSpec, flatten, dropout, dense
from network.layers import create_layer, Dropout
from tensor.checks import ShapeError


class ForwardTrace:
    """ Per-layer inputs and backward caches of one forward pass """

    def __init__(self):
        self.inputs = []
        self.caches = []
        self.logits = None

    def __len__(self):
        return len(self.inputs)

    def output(self, index):
        if index + 1 < len(self.inputs):
            return self.inputs[index + 1]
        return self.logits


class Network:

    def __init__(self, config, layers):
        if len(layers) != len(config.layers):
            raise ConfigError("config declares {} layers, got {}".format(len(config.layers), len(layers)))
        self.config = config
        self.layers = layers

    @property
    def classifier_index(self):
        return len(self.layers) - 1

    @property
    def depth(self):
        return self.config.depth

    @property
    def dtype(self):
        for layer in self.layers:
            if layer.trainable:
                return layer.weights.dtype
        return np.float32

    def forward(self, batch, train_mode=False, rng=None, stop=None):
        """
        Runs layers 0..stop (inclusive, default all) and returns (output, ForwardTrace).
        Dropout is only active in train mode.
        """
        expected = tuple(self.config.input_shape)
        if tuple(batch.shape[1:]) != expected:
            raise ShapeError("network input: expected per-sample shape={} got={}".format(expected, batch.shape[1:]))
        stop = self.classifier_index if stop is None else stop

        trace = ForwardTrace()
        x = batch
        for layer in self.layers[:stop + 1]:
            trace.inputs.append(x)
            x, cache = layer.forward(x, train_mode, rng)
            trace.caches.append(cache)
        trace.logits = x
        return x, trace

    def backward(self, trace, grad_logits):
        """ Returns {layer_index: {"weights": grad, "bias": grad}} for every trainable layer """
        if len(trace) != len(self.layers):
            raise ValueError("trace has {} layers, network has {}".format(len(trace), len(self.layers)))
        grads = {}
        grad = grad_logits
        for index in range(len(self.layers) - 1, -1, -1):
            grad, param_grads = self.layers[index].backward(grad, trace.caches[index])
            if param_grads:
                grads[index] = param_grads
        return grads

    def trainable_indices(self):
        return [i for i, layer in enumerate(self.layers) if layer.trainable]

    def hebbian_indices(self, include_dense=True):
        """ Internal trainable layers: every conv/dense up to the last cut point, never the classifier """
        last = self.config.cut_points[-1]
        return [i for i in self.trainable_indices()
                if i <= last and (include_dense or self.layers[i].kind == "conv")]

    def params(self):
        """ Yields (layer_index, name, array) in a fixed order """
        for index in self.trainable_indices():
            for name, arr in self.layers[index].params().items():
                yield index, name, arr

    def set_dropout_rate(self, rate):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rate = rate
        for spec in self.config.layers:
            if spec.kind == "dropout":
                spec.params["rate"] = rate

    def copy(self):
        return Network(self.config.copy(), [layer.copy() for layer in self.layers])

    def predict(self, batch):
        return self.forward(batch, train_mode=False)[0]

    def cut_at(self, layer_k, num_classes, rng):
        """
        Deep layers 1..layer_k (parameters copied) plus a fresh Xavier-initialized linear
        classifier on the flattened layer_k output.
        """
        if not 1 <= layer_k <= self.depth:
            raise ConfigError("layer_k must be in 1..{}, got {}".format(self.depth, layer_k))
        end = self.config.cut_points[layer_k - 1]
        shape = self.config.shapes()[end]

        specs = [LayerSpec.from_dict(spec.to_dict()) for spec in self.config.layers[:end + 1]]
        layers = [layer.copy() for layer in self.layers[:end + 1]]
        head = []
        if len(shape) > 1:
            head.append(flatten())
        head += [dropout(self._dropout_rate()), dense(num_classes)]

        config = NetworkConfig(specs + head, self.config.input_shape, num_classes,
                               self.config.cut_points[:layer_k], name=self.config.name)
        shapes = config.shapes()
        in_shape = shapes[end]
        for spec in head:
            layer = create_layer(spec, in_shape, rng, self.dtype)
            layers.append(layer)
            in_shape = shapes[len(layers) - 1]
        return Network(config, layers)

    def _dropout_rate(self):
        rates = [layer.rate for layer in self.layers if isinstance(layer, Dropout)]
        return rates[-1] if rates else 0.0

    def extract_features(self, batch, layer_k):
        """ Flattened eval-mode activations at the end of deep layer layer_k """
        if not 1 <= layer_k <= self.depth:
            raise ConfigError("layer_k must be in 1..{}, got {}".format(self.depth, layer_k))
        out, _ = self.forward(batch, train_mode=False, stop=self.config.cut_points[layer_k - 1])
        return out.reshape(out.shape[0], -1)


def build(config, rng, dtype=np.float32):
    """ Xavier-initialized weights, zero biases """
    shapes = config.shapes()
    layers = []
    in_shape = config.input_shape
    for spec, shape in zip(config.layers, shapes):
        layers.append(create_layer(spec, in_shape, rng, dtype))
        in_shape = shape
    return Network(config, layers)


def forward(network, batch, train_mode=False, rng=None):
    return network.forward(batch, train_mode, rng)


def backward(network, trace, grad_logits):
    return network.backward(trace, grad_logits)


def cut_at(network, layer_k, num_classes, rng):
    return network.cut_at(layer_k, num_classes, rng)


def extract_features(network, batch, layer_k):
    return network.extract_features(batch, layer_k)
