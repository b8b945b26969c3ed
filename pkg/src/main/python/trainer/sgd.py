# SPDX-License-Identifier: GPL-2.0-or-later
from dataclasses import dataclass

import numpy as np


@dataclass
class SgdConfig:
    lr0: float = 1e-3
    momentum: float = 0.9
    nesterov: bool = True
    dropout_rate: float = 0.5
    weight_decay: float = 5e-2
    epochs: int = 20
    batch_size: int = 64
    # lr stays lr0 for constant_epochs, then halves every halving_period epochs
    constant_epochs: int = 10
    halving_period: int = 2

    def __post_init__(self):
        if self.lr0 <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid sgd config: lr0={} batch_size={} epochs={}".format(
                self.lr0, self.batch_size, self.epochs))
        if not 0 <= self.momentum < 1 or not 0 <= self.dropout_rate < 1 or self.weight_decay < 0:
            raise ValueError("invalid sgd config: momentum={} dropout_rate={} weight_decay={}".format(
                self.momentum, self.dropout_rate, self.weight_decay))

    def learning_rate(self, epoch):
        """ lr0 for epochs 1..constant_epochs, then lr0 * 2^-floor((epoch - constant_epochs) / halving_period) """
        if epoch <= self.constant_epochs:
            return self.lr0
        return self.lr0 * 0.5 ** ((epoch - self.constant_epochs) // self.halving_period)


def sgd_step(params, grads, velocity, lr, cfg, decay=True):
    """
    One momentum step for a single tensor; returns (params, velocity).

        g = grads + weight_decay * params   (weights only)
        v = momentum * v - lr * g
        params += momentum * v - lr * g     (Nesterov) or params += v
    """
    g = grads + cfg.weight_decay * params if decay and cfg.weight_decay else grads
    v = cfg.momentum * velocity - lr * g
    if cfg.nesterov:
        new = params + cfg.momentum * v - lr * g
    else:
        new = params + v
    return new.astype(params.dtype, copy=False), v.astype(velocity.dtype, copy=False)


def zero_velocity(network):
    return {(index, name): np.zeros_like(arr) for index, name, arr in network.params()}


def apply_gradients(network, grads, velocity, lr, cfg):
    """ Steps every trainable tensor of the network; decay applies to weights, not biases """
    for index, name, arr in list(network.params()):
        key = (index, name)
        new, velocity[key] = sgd_step(arr, grads[index][name], velocity[key], lr, cfg, decay=name == "weights")
        setattr(network.layers[index], name, new)
    return velocity
