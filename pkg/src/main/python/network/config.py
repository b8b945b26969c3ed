# SPDX-License-Identifier: GPL-2.0-or-later
from copy import deepcopy

from constants import IMAGE_SHAPE, NUM_DEEP_LAYERS
from tensor.checks import out_size

LAYER_KINDS = ("conv", "maxpool", "relu", "flatten", "dense", "dropout")

REQUIRED_PARAMS = {
    "conv": ("out_channels", "kernel", "stride", "padding"),
    "maxpool": ("k", "stride"),
    "relu": (),
    "flatten": (),
    "dense": ("units",),
    "dropout": ("rate",),
}


class ConfigError(ValueError):
    pass


class LayerSpec:

    def __init__(self, kind, **params):
        if kind not in LAYER_KINDS:
            raise ConfigError("unknown layer kind {}, expected one of {}".format(kind, LAYER_KINDS))
        missing = [p for p in REQUIRED_PARAMS[kind] if p not in params]
        if missing:
            raise ConfigError("{} layer is missing parameters {}".format(kind, missing))
        self.kind = kind
        self.params = params

    def __getattr__(self, item):
        try:
            return self.__dict__["params"][item]
        except KeyError:
            raise AttributeError(item)

    def __eq__(self, other):
        return isinstance(other, LayerSpec) and self.kind == other.kind and self.params == other.params

    def __repr__(self):
        return "LayerSpec({}, {})".format(self.kind, self.params)

    def to_dict(self):
        out = {"kind": self.kind}
        out.update(self.params)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        return cls(data.pop("kind"), **data)


def conv(out_channels, kernel, stride=1, padding=0):
    return LayerSpec("conv", out_channels=out_channels, kernel=kernel, stride=stride, padding=padding)


def maxpool(k=2, stride=2):
    return LayerSpec("maxpool", k=k, stride=stride)


def relu():
    return LayerSpec("relu")


def flatten():
    return LayerSpec("flatten")


def dense(units):
    return LayerSpec("dense", units=units)


def dropout(rate=0.5):
    return LayerSpec("dropout", rate=rate)


def output_shape(spec, in_shape):
    """ Shape of one sample (no batch axis) after `spec` """
    kind = spec.kind
    if kind == "conv":
        if len(in_shape) != 3:
            raise ConfigError("conv expects a C,H,W input, got {}".format(in_shape))
        c, h, w = in_shape
        k, p, s = spec.kernel, spec.padding, spec.stride
        if k > h + 2 * p or k > w + 2 * p or s < 1:
            raise ConfigError("conv kernel {} stride {} padding {} does not fit input {}".format(k, s, p, in_shape))
        return spec.out_channels, out_size(h, k, s, p), out_size(w, k, s, p)
    elif kind == "maxpool":
        if len(in_shape) != 3:
            raise ConfigError("maxpool expects a C,H,W input, got {}".format(in_shape))
        c, h, w = in_shape
        if spec.k > h or spec.k > w:
            raise ConfigError("maxpool window {} larger than input {}".format(spec.k, in_shape))
        return c, out_size(h, spec.k, spec.stride, 0), out_size(w, spec.k, spec.stride, 0)
    elif kind == "flatten":
        size = 1
        for d in in_shape:
            size *= d
        return (size,)
    elif kind == "dense":
        if len(in_shape) != 1:
            raise ConfigError("dense expects a flat input, got {}; add a flatten layer".format(in_shape))
        return (spec.units,)
    return tuple(in_shape)


class NetworkConfig:
    """
    Declarative architecture: an ordered list of LayerSpec, the per-sample input shape,
    the number of classes and the cut points. cut_points[k-1] is the index of the last
    layer that belongs to deep layer k; features for layer k are read at its output.
    """

    def __init__(self, layers, input_shape=IMAGE_SHAPE, num_classes=10, cut_points=None, name="custom"):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.cut_points = list(cut_points or [])
        self.name = name

    @property
    def depth(self):
        return len(self.cut_points)

    def shapes(self):
        """ Validates the chain and returns the per-sample shape after every layer """
        if not self.layers:
            raise ConfigError("network has no layers")
        last = self.layers[-1]
        if last.kind != "dense" or last.units != self.num_classes:
            raise ConfigError("final layer must be a dense classifier with {} units, got {}".format(
                self.num_classes, last))
        if not 1 <= len(self.cut_points) <= NUM_DEEP_LAYERS:
            raise ConfigError("expected 1..{} cut points, got {}".format(NUM_DEEP_LAYERS, self.cut_points))
        if sorted(set(self.cut_points)) != self.cut_points:
            raise ConfigError("cut points must be strictly increasing, got {}".format(self.cut_points))
        if self.cut_points[0] < 0 or self.cut_points[-1] >= len(self.layers) - 1:
            raise ConfigError("cut points must index layers before the classifier, got {}".format(self.cut_points))

        shapes = []
        shape = self.input_shape
        for spec in self.layers:
            shape = output_shape(spec, shape)
            shapes.append(shape)
        return shapes

    def cut_shape(self, layer_k):
        if not 1 <= layer_k <= self.depth:
            raise ConfigError("layer_k must be in 1..{}, got {}".format(self.depth, layer_k))
        return self.shapes()[self.cut_points[layer_k - 1]]

    def to_dict(self):
        return {
            "name": self.name,
            "layers": [spec.to_dict() for spec in self.layers],
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "cut_points": list(self.cut_points),
        }

    @classmethod
    def from_dict(cls, data):
        return cls([LayerSpec.from_dict(d) for d in data["layers"]], tuple(data["input_shape"]),
                   data["num_classes"], list(data["cut_points"]), data.get("name", "custom"))

    def copy(self):
        return deepcopy(self)


def default_config(num_classes=10, dropout_rate=0.5):
    """
    Six-layer AlexNet-style stand-in: deep layers 1-4 are convolutions, deep layer 5 is
    a dense layer, followed by the linear classifier. Channel counts are kept small enough
    for CPU training.
    """
    layers = [
        conv(96, 5, padding=2), relu(), maxpool(),      # 1: 96x16x16
        conv(128, 3, padding=1), relu(), maxpool(),     # 2: 128x8x8
        conv(192, 3, padding=1), relu(),                # 3: 192x8x8
        conv(256, 3, padding=1), relu(), maxpool(),     # 4: 256x4x4
        flatten(), dropout(dropout_rate), dense(300), relu(),  # 5: 300
        dropout(dropout_rate), dense(num_classes),
    ]
    return NetworkConfig(layers, IMAGE_SHAPE, num_classes, [2, 5, 7, 10, 14], name="default")


def small_config(num_classes=10, dropout_rate=0.5):
    """ Same topology as default_config with narrow layers, for smoke-scale runs """
    layers = [
        conv(16, 5, padding=2), relu(), maxpool(),
        conv(24, 3, padding=1), relu(), maxpool(),
        conv(32, 3, padding=1), relu(),
        conv(48, 3, padding=1), relu(), maxpool(),
        flatten(), dropout(dropout_rate), dense(64), relu(),
        dropout(dropout_rate), dense(num_classes),
    ]
    return NetworkConfig(layers, IMAGE_SHAPE, num_classes, [2, 5, 7, 10, 14], name="small")


def toy_config(num_classes=10, input_shape=(3, 8, 8), dropout_rate=0.0):
    """ 2 conv + 1 dense deep layers on 8x8 inputs """
    layers = [
        conv(4, 3, padding=1), relu(), maxpool(),   # 1: 4x4x4
        conv(6, 3, padding=1), relu(),              # 2: 6x4x4
        flatten(), dense(12), relu(),               # 3: 12
        dropout(dropout_rate), dense(num_classes),
    ]
    return NetworkConfig(layers, input_shape, num_classes, [2, 4, 7], name="toy")


def dense_config(input_dim, units, num_classes=2, activation=None):
    """ Single dense deep layer, used to study the Hebbian rule on vector data """
    layers = [dense(units)]
    if activation == "relu":
        layers.append(relu())
    layers.append(dense(num_classes))
    return NetworkConfig(layers, (input_dim,), num_classes, [len(layers) - 2], name="dense")


PRESETS = {
    "default": default_config,
    "small": small_config,
    "toy": toy_config,
}


def preset(name, num_classes, dropout_rate=0.5):
    if name not in PRESETS:
        raise ConfigError("unknown network preset {}, expected one of {}".format(name, sorted(PRESETS)))
    return PRESETS[name](num_classes=num_classes, dropout_rate=dropout_rate)
