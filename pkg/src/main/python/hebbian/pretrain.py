# SPDX-License-Identifier: GPL-2.0-or-later
import logging

import numpy as np

from hebbian.hpca import HpcaLayerStats, layer_delta, apply_delta, layer_representation_error
from util import batch_indices


def pretrain(network, dataset, cfg, rng, on_epoch=None):
    """
    Unsupervised HPCA pre-training of every internal trainable layer.

    Each mini-batch goes through the network once in eval mode (no dropout); every
    internal layer then receives its update from its own inputs in that pass, so all
    layers move simultaneously. Only images are read; labels and gradients are never
    touched. Returns (network, {layer_index: HpcaLayerStats}).
    """
    if len(dataset) == 0:
        raise ValueError("pretrain: empty dataset")

    indices = network.hebbian_indices(cfg.include_dense)
    stats = {index: HpcaLayerStats(index) for index in indices}
    last = max(indices) if indices else None
    logging.info("pretrain: {} samples, layers {}, {} epochs, eta={}".format(
        len(dataset), indices, cfg.epochs, cfg.eta))

    for epoch in range(1, cfg.epochs + 1):
        errors = {index: 0.0 for index in indices}
        seen = 0
        for idx in batch_indices(len(dataset), cfg.batch_size, rng):
            images = dataset.images_at(idx)
            _, trace = network.forward(images, train_mode=False, stop=last)
            deltas = {}
            for index in indices:
                layer = network.layers[index]
                inputs = trace.inputs[index]
                errors[index] += layer_representation_error(layer, inputs, cfg) * len(idx)
                deltas[index] = layer_delta(layer, inputs, cfg)
            for index in indices:
                apply_delta(network.layers[index], deltas[index])
            seen += len(idx)

        for index in indices:
            layer_stats = stats[index]
            layer_stats.representation_error.append(errors[index] / seen)
            norms = np.linalg.norm(network.layers[index].flat_weights.astype(np.float64), axis=1)
            layer_stats.weight_norms.append(norms.tolist())
            logging.info("pretrain: epoch {} layer {} representation_error={:.6f} mean_norm={:.4f}".format(
                epoch, index, layer_stats.representation_error[-1], float(norms.mean())))
        if on_epoch is not None:
            on_epoch(epoch, stats)

    for index in indices:
        check_error_trend(stats[index])
    return network, stats


def check_error_trend(layer_stats):
    """ Representation error should not grow over the run """
    errors = layer_stats.representation_error
    if len(errors) < 2:
        return True
    first, last = errors[0], errors[-1]
    rises = sum(1 for a, b in zip(errors, errors[1:]) if b > a)
    if last > first or rises > (len(errors) - 1) // 2:
        logging.warning("pretrain: representation error of layer {} is not decreasing: first={:.6f} last={:.6f} "
                        "rises={}/{}".format(layer_stats.layer_index, first, last, rises, len(errors) - 1))
        return False
    return True
