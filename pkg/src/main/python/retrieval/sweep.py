# SPDX-License-Identifier: GPL-2.0-or-later
import logging

import numpy as np

from dataset.cifar import ConcatDataset
from retrieval.metrics import evaluate_map
from trainer.protocol import prepare_base, run_protocol


class SweepResult:

    def __init__(self, best_layer_k, validation_map, test_report, train_reports, test_reports=None):
        self.best_layer_k = best_layer_k
        # {layer_k: validation mAP}
        self.validation_map = validation_map
        self.test_report = test_report
        self.train_reports = train_reports
        # {layer_k: RetrievalReport} when every layer was also scored on the test set
        self.test_reports = test_reports or {}

    def __repr__(self):
        return "SweepResult(best_layer={}, test_mAP={:.4f})".format(self.best_layer_k, self.test_report.map)


def retrieval_database(splits, database="train+validation"):
    """ Retrieval database for test queries: train+validation images, or train only """
    if database == "train":
        return splits.train
    return ConcatDataset([splits.train, splits.validation], "database")


def select_layer(validation_map):
    """ argmax over layers, smallest k on ties """
    layers = sorted(validation_map)
    return layers[int(np.argmax([validation_map[k] for k in layers]))]


def layer_sweep(splits, regime, pretrain_mode, cfgs, rng, report_all_layers=False, base_network=None,
                on_layer=None):
    """
    Cuts the (optionally pre-trained) network at every deep layer, fine-tunes each cut,
    scores it by validation mAP (validation images queried against the training
    images, or a seeded subset of them) and reports test mAP for the selected layer.
    """
    if base_network is None:
        base_network, _ = prepare_base(splits, pretrain_mode, cfgs, rng)
    database = retrieval_database(splits, cfgs.database)
    selection = splits.train
    if cfgs.selection_samples is not None and cfgs.selection_samples < len(selection):
        selection = selection.subset(np.sort(rng.permutation(len(selection))[:cfgs.selection_samples]))

    validation_map = {}
    networks = {}
    train_reports = {}
    test_reports = {}
    for layer_k in range(1, base_network.depth + 1):
        network_k, report = run_protocol(splits, regime, pretrain_mode, layer_k, cfgs, rng, base_network)
        validation_map[layer_k] = evaluate_map(network_k, selection, splits.validation, layer_k).map
        train_reports[layer_k] = report
        networks[layer_k] = network_k
        if report_all_layers:
            test_reports[layer_k] = evaluate_map(network_k, database, splits.test, layer_k)
        logging.info("sweep: layer {} validation mAP={:.4f}".format(layer_k, validation_map[layer_k]))
        if on_layer is not None:
            on_layer(layer_k, validation_map[layer_k], report)

    best = select_layer(validation_map)
    test_report = test_reports.get(best) or evaluate_map(networks[best], database, splits.test, best)
    logging.info("sweep: selected layer {} test mAP={:.4f}".format(best, test_report.map))
    return SweepResult(best, validation_map, test_report, train_reports, test_reports)
