# SPDX-License-Identifier: GPL-2.0-or-later
import logging

import numpy as np

from retrieval.ranking import squared_distances, squared_norms, rank_rows
from retrieval.store import build_store, FEATURE_BATCH_SIZE

QUERY_CHUNK = 64


class RetrievalReport:

    def __init__(self, per_query_aps, layer_k, K, skipped=0):
        self.per_query_aps = np.asarray(per_query_aps, dtype=np.float64)
        self.layer_k = layer_k
        self.K = K
        self.skipped = skipped

    @property
    def num_queries(self):
        return len(self.per_query_aps)

    @property
    def map(self):
        if not len(self.per_query_aps):
            return 0.0
        return float(np.mean(self.per_query_aps))

    def __repr__(self):
        return "RetrievalReport(layer={}, mAP={:.4f}, queries={}, skipped={}, K={})".format(
            self.layer_k, self.map, self.num_queries, self.skipped, self.K)


def average_precision(relevance, total_relevant):
    """ APS = sum_i P_i (R_i - R_{i-1}) over the ranked list, R_0 = 0 """
    if total_relevant < 1:
        raise ValueError("average_precision: query has no relevant items")
    rel = np.asarray(relevance, dtype=np.float64)
    hits = np.cumsum(rel)
    precision = hits / np.arange(1, len(rel) + 1)
    return float(np.sum(precision * rel) / total_relevant)


def _chunk_aps(relevance, total_relevant):
    hits = np.cumsum(relevance, axis=1)
    precision = hits / np.arange(1, relevance.shape[1] + 1)
    return np.sum(precision * relevance, axis=1) / total_relevant


def evaluate_features(store, query_features, query_labels, K=None):
    """
    Ranks every query against the store and averages APS. K defaults to the full
    database size; the recall denominator counts all database items sharing the
    query label. Queries with no such items are skipped and counted.
    """
    K = len(store) if K is None else min(K, len(store))
    class_counts = {}
    labels, counts = np.unique(store.labels, return_counts=True)
    for label, count in zip(labels, counts):
        class_counts[int(label)] = int(count)

    norms = squared_norms(store.features)
    aps = []
    skipped = 0
    for start in range(0, len(query_labels), QUERY_CHUNK):
        q = query_features[start:start + QUERY_CHUNK]
        ql = np.asarray(query_labels[start:start + QUERY_CHUNK])
        total = np.array([class_counts.get(int(label), 0) for label in ql])
        keep = total > 0
        skipped += int(np.sum(~keep))
        if not np.any(keep):
            continue
        order = rank_rows(squared_distances(store.features, q[keep], norms))[:, :K]
        relevance = (store.labels[order] == ql[keep][:, None]).astype(np.float64)
        aps.append(_chunk_aps(relevance, total[keep]))

    if skipped:
        logging.warning("retrieval: skipped {} queries with no relevant database items".format(skipped))
    aps = np.concatenate(aps) if aps else np.zeros(0)
    return RetrievalReport(aps, store.layer_k, K, skipped)


def evaluate_map(network, db_split, query_split, layer_k, batch_size=FEATURE_BATCH_SIZE, K=None):
    """ Database features from db_split, queries from query_split, mAP at layer_k """
    store = build_store(network, db_split, layer_k, batch_size)
    queries = build_store(network, query_split, layer_k, batch_size)
    report = evaluate_features(store, queries.features, queries.labels, K)
    logging.info("retrieval: layer {} {} queries vs {} database items -> mAP={:.4f}".format(
        layer_k, report.num_queries, len(store), report.map))
    return report
