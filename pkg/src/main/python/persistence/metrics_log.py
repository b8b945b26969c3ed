# SPDX-License-Identifier: GPL-2.0-or-later
import csv
import os
from collections import namedtuple

FIELDS = ("run_id", "phase", "step", "metric", "value")

MetricRow = namedtuple("MetricRow", FIELDS)


def append_metrics(path, rows):
    """ Appends rows to the CSV metrics log, writing the header on first use """
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as outf:
        writer = csv.writer(outf)
        if new_file:
            writer.writerow(FIELDS)
        for row in rows:
            # repr keeps floats round-trippable
            writer.writerow([row.run_id, row.phase, int(row.step), row.metric, repr(float(row.value))])


def read_metrics(path):
    with open(path, newline="") as inf:
        reader = csv.reader(inf)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != FIELDS:
            raise ValueError("{}: unexpected metrics header {}".format(path, header))
        return [MetricRow(r[0], r[1], int(r[2]), r[3], float(r[4])) for r in reader if r]


def report_rows(run_id, phase, report):
    """ Per-epoch rows for a fine-tuning TrainReport """
    rows = []
    for epoch, (loss, acc, lr) in enumerate(zip(report.train_loss, report.validation_accuracy,
                                                report.learning_rate), start=1):
        rows.append(MetricRow(run_id, phase, epoch, "train_loss", loss))
        rows.append(MetricRow(run_id, phase, epoch, "validation_accuracy", acc))
        rows.append(MetricRow(run_id, phase, epoch, "learning_rate", lr))
    return rows


def hpca_rows(run_id, stats):
    """ Per-epoch rows for pre-training layer statistics """
    rows = []
    for index in sorted(stats):
        layer = stats[index]
        for epoch, err in enumerate(layer.representation_error, start=1):
            rows.append(MetricRow(run_id, "pretrain", epoch, "layer{}.representation_error".format(index), err))
        for epoch, norms in enumerate(layer.weight_norms, start=1):
            mean_norm = sum(norms) / len(norms)
            rows.append(MetricRow(run_id, "pretrain", epoch, "layer{}.mean_weight_norm".format(index), mean_norm))
    return rows
