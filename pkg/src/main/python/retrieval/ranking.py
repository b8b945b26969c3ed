# SPDX-License-Identifier: GPL-2.0-or-later
import numpy as np

from tensor.checks import expect_dim

BLOCK_ELEMENTS = 1 << 22


def squared_norms(features):
    return np.einsum("ij,ij->i", features, features, dtype=np.float64)


def squared_distances(features, queries, feature_norms=None, chunk=None):
    """
    [Q,N] squared euclidean distances, computed entirely in float64. The store is
    converted one block of rows at a time (at most BLOCK_ELEMENTS values), never as a whole.
    """
    expect_dim("query feature size", queries.shape[1], features.shape[1])
    if chunk is None:
        chunk = max(1, BLOCK_ELEMENTS // max(1, features.shape[1]))
    if feature_norms is None:
        feature_norms = squared_norms(features)
    q = np.asarray(queries).astype(np.float64, copy=False)
    q_norms = squared_norms(q)
    d = np.empty((q.shape[0], features.shape[0]))
    for start in range(0, features.shape[0], chunk):
        block = features[start:start + chunk].astype(np.float64, copy=False)
        d[:, start:start + chunk] = (q_norms[:, None] + feature_norms[None, start:start + chunk]
                                     - 2.0 * (q @ block.T))
    return np.maximum(d, 0.0)


def rank_rows(distances):
    """ Ascending distance per row, ties broken by ascending index """
    return np.argsort(distances, axis=1, kind="stable")


def direct_distances(features, query_feature, chunk=4096):
    """ Squared distances of one query by explicit differences; identical rows give exactly 0 """
    query = np.asarray(query_feature).reshape(-1)
    expect_dim("query feature size", query.shape[0], features.shape[1])
    out = np.empty(features.shape[0])
    for start in range(0, features.shape[0], chunk):
        diff = features[start:start + chunk] - query.astype(features.dtype, copy=False)
        out[start:start + chunk] = np.einsum("ij,ij->i", diff, diff, dtype=np.float64)
    return out


def rank(store, query_feature):
    """ Database indices ordered by euclidean distance to the query """
    return np.argsort(direct_distances(store.features, query_feature), kind="stable")


def nearest(store, query_feature, topk):
    """ (index, label, distance) triples of the topk closest rows """
    d = direct_distances(store.features, query_feature)
    order = np.argsort(d, kind="stable")[:topk]
    return [(int(i), int(store.labels[i]), float(np.sqrt(d[i]))) for i in order]
