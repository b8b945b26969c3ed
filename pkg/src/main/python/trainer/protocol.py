# SPDX-License-Identifier: GPL-2.0-or-later
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dataset.split import make_regime
from hebbian.hpca import HpcaConfig
from hebbian.pretrain import pretrain
from network.config import preset
from network.network import build
from trainer.finetune import classify_accuracy, finetune
from trainer.sgd import SgdConfig

PRETRAIN_MODES = ("none", "hpca")
DATABASES = ("train+validation", "train")


@dataclass
class ExperimentConfig:
    network: str = "default"
    sgd: SgdConfig = field(default_factory=SgdConfig)
    hpca: HpcaConfig = field(default_factory=HpcaConfig)
    # retrieval database for test queries
    database: str = "train+validation"
    # pre-train on a seeded subset of this many training images (all when None)
    pretrain_samples: Optional[int] = None
    # layer selection searches a seeded subset of this many training images (all when None)
    selection_samples: Optional[int] = None

    def __post_init__(self):
        if self.database not in DATABASES:
            raise ValueError("database must be one of {}, got {}".format(DATABASES, self.database))


def prepare_base(splits, pretrain_mode, cfgs, rng, network=None, on_epoch=None):
    """
    Phase 1: builds the Xavier-initialized network and, for pretrain_mode "hpca",
    pre-trains it on the training images (labels unused). Returns (network, stats).
    """
    if pretrain_mode not in PRETRAIN_MODES:
        raise ValueError("pretrain_mode must be one of {}, got {}".format(PRETRAIN_MODES, pretrain_mode))
    if network is None:
        network = build(preset(cfgs.network, splits.num_classes, cfgs.sgd.dropout_rate), rng)
    if pretrain_mode == "none":
        return network, {}

    images = splits.train
    if cfgs.pretrain_samples is not None and cfgs.pretrain_samples < len(images):
        images = images.subset(np.sort(rng.permutation(len(images))[:cfgs.pretrain_samples]))
    return pretrain(network, images, cfgs.hpca, rng, on_epoch)


def with_test_accuracy(network, report, test):
    """ Test accuracy is measured only after fine-tuning has returned its best network """
    if test is not None:
        report.test_accuracy = classify_accuracy(network, test)
    return report


def run_protocol(splits, regime, pretrain_mode, layer_k, cfgs, rng, base_network=None, on_epoch=None,
                 resume=None, stop_after=None):
    """
    (1) optional HPCA pre-training on all training images, (2) cut at layer_k,
    (3) fine-tuning on the regime's labeled subset. Returns (network_k, TrainReport).

    base_network skips phase 1, so a sweep can pre-train once and cut it five times.
    resume continues an interrupted fine-tuning (TrainState) and skips phases 1 and 2.
    """
    split_index = make_regime(splits.train, regime)
    labeled = splits.train.subset(split_index.labeled_indices)
    if resume is not None:
        logging.info("protocol: resuming regime={}% layer={} after epoch {}".format(
            regime.s_percent, layer_k, resume.epoch))
        network_k, report = finetune(resume.network, labeled, splits.validation, cfgs.sgd, resume.rng,
                                     resume=resume, stop_after=stop_after, on_epoch=on_epoch)
        return network_k, with_test_accuracy(network_k, report, splits.test)

    if base_network is None:
        base_network, _ = prepare_base(splits, pretrain_mode, cfgs, rng)
    network_k = base_network.cut_at(layer_k, splits.num_classes, rng)
    logging.info("protocol: pretrain={} regime={}% layer={} labeled={}".format(
        pretrain_mode, regime.s_percent, layer_k, len(labeled)))
    best, report = finetune(network_k, labeled, splits.validation, cfgs.sgd, rng, stop_after=stop_after,
                            on_epoch=on_epoch)
    return best, with_test_accuracy(best, report, splits.test)
