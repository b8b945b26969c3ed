# SPDX-License-Identifier: GPL-2.0-or-later
import math

import numpy as np
from scipy import stats

CONFIDENCE = 0.95


def mean_interval(values, confidence=CONFIDENCE):
    """
    Mean and half-width of the two-sided t confidence interval over independent runs
    (n - 1 degrees of freedom). The half-width is None for a single run.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("mean_interval: no values")
    mean = float(values.mean())
    if values.size == 1:
        return mean, None
    sd = float(values.std(ddof=1))
    quantile = float(stats.t.ppf(0.5 + confidence / 2, values.size - 1))
    return mean, quantile * sd / math.sqrt(values.size)


def most_common(values):
    """ Most frequent value, smallest on ties """
    uniq, counts = np.unique(np.asarray(values), return_counts=True)
    return uniq[int(np.argmax(counts))].item()
