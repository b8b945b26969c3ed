# SPDX-License-Identifier: GPL-2.0-or-later
import logging
from dataclasses import dataclass

import numpy as np

from constants import REGIMES, TRAIN_SIZE, VALIDATION_SIZE
from dataset.cifar import channel_stats, load_dataset
from util import make_rng

VALIDATION_FRACTION = VALIDATION_SIZE / (TRAIN_SIZE + VALIDATION_SIZE)


@dataclass(frozen=True)
class RegimeSpec:
    s_percent: int
    seed: int = 0

    def __post_init__(self):
        if self.s_percent not in REGIMES:
            raise ValueError("regime must be one of {}, got {}".format(REGIMES, self.s_percent))

    def labeled_count(self, total):
        # round half up: |T_L| = round(s/100 * |T|)
        return (2 * self.s_percent * total + 100) // 200


class SplitIndex:
    """ Labeled / unlabeled partition of the training split """

    def __init__(self, labeled_indices, unlabeled_indices, per_class_counts):
        self.labeled_indices = labeled_indices
        self.unlabeled_indices = unlabeled_indices
        self.per_class_counts = per_class_counts

    def __repr__(self):
        return "SplitIndex(labeled={}, unlabeled={})".format(len(self.labeled_indices), len(self.unlabeled_indices))


class Splits:
    """ Normalized train / validation / test datasets of one run """

    def __init__(self, train, validation, test, normalization):
        self.train = train
        self.validation = validation
        self.test = test
        self.normalization = normalization

    @property
    def num_classes(self):
        return self.train.num_classes


def split_train_validation(dataset, seed, validation_size=None):
    """ Seeded shuffle of the training records into train / validation (40000 / 10000 for CIFAR) """
    if validation_size is None:
        validation_size = int(round(len(dataset) * VALIDATION_FRACTION))
    if not 0 < validation_size < len(dataset):
        raise ValueError("validation size {} does not fit {} records".format(validation_size, len(dataset)))
    order = make_rng(seed).permutation(len(dataset))
    train_idx = np.sort(order[validation_size:])
    validation_idx = np.sort(order[:validation_size])
    return dataset.subset(train_idx, "train"), dataset.subset(validation_idx, "validation")


def labeling_order(labels, seed):
    """
    Global order in which training samples become labeled. Each class is shuffled with
    the seed and its j-th sample gets priority (j + 0.5) / class_size; every prefix of the
    order is therefore stratified, and smaller regimes are prefixes of larger ones.
    """
    rng = make_rng(seed)
    keys, classes, ranks, members = [], [], [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        j = np.arange(len(idx))
        keys.append((j + 0.5) / len(idx))
        classes.append(np.full(len(idx), c))
        ranks.append(j)
        members.append(idx)
    keys, classes, ranks, members = (np.concatenate(a) for a in (keys, classes, ranks, members))
    return members[np.lexsort((ranks, classes, keys))]


def make_regime(train, spec):
    labels = np.asarray(train.labels)
    order = labeling_order(labels, spec.seed)
    count = spec.labeled_count(len(labels))
    labeled = np.sort(order[:count])
    unlabeled = np.sort(order[count:])
    classes, counts = np.unique(labels[labeled], return_counts=True)
    per_class = {int(c): int(n) for c, n in zip(classes, counts)}
    logging.info("regime {}%: {} labeled / {} unlabeled".format(spec.s_percent, len(labeled), len(unlabeled)))
    return SplitIndex(labeled, unlabeled, per_class)


def normalize_splits(train, validation, test):
    """ Per-channel statistics come from the train split only """
    normalization = channel_stats(train)
    return Splits(train.with_normalization(normalization),
                  validation.with_normalization(normalization),
                  test.with_normalization(normalization) if test is not None else None,
                  normalization)


def load_splits(directory, name, seed, limit=None, strict=True):
    """
    Loads a CIFAR dataset, splits train/validation with the seed and normalizes.
    `limit` keeps a seeded random subset of that many training records (and a
    proportional test subset), for smoke-scale runs.
    """
    full = load_dataset(directory, name, "train", strict)
    test = load_dataset(directory, name, "test", strict)
    if limit is not None and limit < len(full):
        rng = make_rng(seed)
        full = full.subset(np.sort(rng.permutation(len(full))[:limit]))
        test_limit = max(1, limit * len(test) // 50000)
        test = test.subset(np.sort(rng.permutation(len(test))[:test_limit]), "test")
    train, validation = split_train_validation(full, seed)
    return normalize_splits(train, validation, test)
