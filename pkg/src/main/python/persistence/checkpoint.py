# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from network.config import NetworkConfig
from network.layers import create_layer
from network.network import Network
from persistence.container import FORMAT_VERSION, write_container, read_container, IntegrityError
from util import make_rng

KIND = "checkpoint"
PHASES = ("init", "pretrained", "finetuned")


class Checkpoint:
    """
    Network parameters plus what is needed to resume: optimizer velocity, rng state and
    provenance (phase, regime, epoch, dataset id, normalization, report...).
    Extra networks (e.g. the best-so-far network during fine-tuning) ride along as
    named parameter sets.
    """

    def __init__(self, config, params, rng_state=None, velocity=None, provenance=None, extra=None):
        self.format_version = FORMAT_VERSION
        self.config = config
        # {(layer_index, name): array}
        self.params = params
        self.rng_state = rng_state
        self.velocity = velocity
        self.provenance = dict(provenance or {})
        # {set_name: {(layer_index, name): array}}
        self.extra = dict(extra or {})

    @property
    def phase(self):
        return self.provenance.get("phase")

    @classmethod
    def from_network(cls, network, **kwargs):
        return cls(network.config.copy(), network_params(network), **kwargs)

    def to_network(self, params=None):
        return network_from_params(self.config, self.params if params is None else params)

    def extra_network(self, name):
        return network_from_params(self.config, self.extra[name])


def network_params(network):
    return {(index, name): arr.copy() for index, name, arr in network.params()}


def network_from_params(config, params):
    shapes = config.shapes()
    # placeholder init, overwritten below
    rng = make_rng(0)
    layers = []
    in_shape = config.input_shape
    for index, (spec, shape) in enumerate(zip(config.layers, shapes)):
        layer = create_layer(spec, in_shape, rng, np.float32)
        if layer.trainable:
            try:
                layer.set_params(params[(index, "weights")], params[(index, "bias")])
            except KeyError:
                raise IntegrityError("checkpoint has no parameters for layer {}".format(index))
            except ValueError as e:
                raise IntegrityError(str(e))
        layers.append(layer)
        in_shape = shape
    return Network(config, layers)


def _tensor_name(prefix, index, name):
    return "{}layer{}.{}".format(prefix, index, name)


def _tensors(prefix, params):
    for (index, name) in sorted(params):
        yield _tensor_name(prefix, index, name), params[(index, name)], "<f4"


def _collect(prefix, tensors):
    out = {}
    for key, arr in tensors.items():
        if not key.startswith(prefix + "layer"):
            continue
        rest = key[len(prefix) + len("layer"):]
        if "." not in rest or not rest.split(".", 1)[0].isdigit():
            continue
        index, name = rest.split(".", 1)
        out[(int(index), name)] = arr
    return out


def save_checkpoint(path, checkpoint):
    tensors = list(_tensors("", checkpoint.params))
    if checkpoint.velocity is not None:
        tensors += list(_tensors("velocity.", checkpoint.velocity))
    for set_name in sorted(checkpoint.extra):
        tensors += list(_tensors("{}.".format(set_name), checkpoint.extra[set_name]))
    meta = {
        "config": checkpoint.config.to_dict(),
        "rng_state": checkpoint.rng_state,
        "provenance": checkpoint.provenance,
        "has_velocity": checkpoint.velocity is not None,
        "extra": sorted(checkpoint.extra),
    }
    return write_container(path, KIND, meta, tensors)


def load_checkpoint(path):
    meta, tensors = read_container(path, KIND)
    config = NetworkConfig.from_dict(meta["config"])
    velocity = _collect("velocity.", tensors) if meta.get("has_velocity") else None
    extra = {name: _collect("{}.".format(name), tensors) for name in meta.get("extra", [])}
    ckpt = Checkpoint(config, _collect("", tensors), meta.get("rng_state"), velocity, meta.get("provenance"), extra)
    # fail early on shape mismatches between header config and payload
    ckpt.to_network()
    return ckpt
