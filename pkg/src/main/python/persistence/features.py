# SPDX-License-Identifier: GPL-2.0-or-later
from persistence.container import write_container, read_container, FormatError
from retrieval.store import FeatureStore

KIND = "features"


def save_features(path, store):
    if len(store) == 0:
        raise ValueError("save_features: refusing to write an empty feature store")
    meta = {"N": len(store), "F": store.dim, "layer_k": store.layer_k, "tag": store.tag}
    return write_container(path, KIND, meta, [
        ("labels", store.labels, "<i4"),
        ("features", store.features, "<f4"),
    ])


def load_features(path):
    meta, tensors = read_container(path, KIND)
    features = tensors["features"]
    if features.shape != (meta["N"], meta["F"]):
        raise FormatError("{}: header declares {}x{} features, payload holds {}".format(
            path, meta["N"], meta["F"], features.shape))
    return FeatureStore(features, tensors["labels"], meta["layer_k"], meta["tag"])
