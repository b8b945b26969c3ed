# SPDX-License-Identifier: GPL-2.0-or-later
from cli.stats import mean_interval, most_common

COLUMNS = ("Regime", "Pre-train", "mAP", "Layer")
MODE_LABELS = {"none": "None", "hpca": "HPCA"}


class SummaryRow:
    """ Test mAP and selected layer of one (regime, pre-training) cell over seeds """

    def __init__(self, regime, mode):
        self.regime = regime
        self.mode = mode
        self.maps = []
        self.layers = []

    def add(self, test_map, layer_k):
        self.maps.append(test_map)
        self.layers.append(layer_k)

    def cells(self):
        mean, half = mean_interval(self.maps)
        if half is None:
            text = "{:.2f}".format(100 * mean)
        else:
            text = "{:.2f} ± {:.2f}".format(100 * mean, 100 * half)
        return ["{}%".format(self.regime), MODE_LABELS.get(self.mode, self.mode), text,
                str(most_common(self.layers))]


def format_table(rows, title=None):
    """ Plain-text table with Regime / Pre-train / mAP / Layer columns; mAP in percent """
    body = [list(COLUMNS)] + [row.cells() for row in rows]
    widths = [max(len(line[i]) for line in body) for i in range(len(COLUMNS))]
    out = []
    if title:
        out.append(title)
    for n, line in enumerate(body):
        out.append("  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip())
        if n == 0:
            out.append("  ".join("-" * width for width in widths))
    return "\n".join(out) + "\n"
