# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import ShapeError, ensure_finite

FEATURE_BATCH_SIZE = 256


class FeatureStore:
    """ Feature rows with aligned labels, as extracted at deep layer layer_k """

    def __init__(self, features, labels, layer_k, tag="database"):
        features = np.asarray(features)
        labels = np.asarray(labels)
        if features.ndim != 2 or features.shape[1] == 0:
            raise ShapeError("feature store needs an [N,F] matrix with F > 0, got {}".format(features.shape))
        if features.shape[0] != labels.shape[0]:
            raise ShapeError("feature store: {} rows but {} labels".format(features.shape[0], labels.shape[0]))
        ensure_finite("feature store", features)
        self.features = features
        self.labels = labels
        self.layer_k = layer_k
        self.tag = tag

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


def build_store(network, dataset, layer_k, batch_size=FEATURE_BATCH_SIZE):
    """ extract_features over the dataset in order """
    rows = []
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        rows.append(network.extract_features(dataset.images_at(idx), layer_k))
    if not rows:
        raise ShapeError("build_store: empty dataset")
    return FeatureStore(np.concatenate(rows), np.asarray(dataset.labels), layer_k, dataset.tag)
