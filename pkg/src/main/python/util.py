# SPDX-License-Identifier: GPL-2.0-or-later
import json
import logging
import os
import pathlib
from logging.handlers import RotatingFileHandler

import numpy as np

from constants import APP_HOME_ENV, DEFAULT_APP_HOME, LOG_FILE_NAME

BUILD_SETTINGS = pathlib.Path(__file__).resolve().parents[2] / "build" / "settings" / "base.json"


def make_rng(seed):
    """ Reproducible generator: PCG64 seeded from a 64-bit unsigned integer """
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer, got {}".format(seed))
    return np.random.Generator(np.random.PCG64(seed))


def rng_state(rng):
    return rng.bit_generator.state


def rng_from_state(state):
    if state["bit_generator"] != "PCG64":
        raise ValueError("unsupported bit generator {}".format(state["bit_generator"]))
    bitgen = np.random.PCG64()
    bitgen.state = state
    return np.random.Generator(bitgen)


def app_version():
    try:
        with open(BUILD_SETTINGS) as inf:
            return json.load(inf)["version"]
    except (OSError, ValueError, KeyError):
        return "unknown"


def init_logger(verbose=False, log_dir=None):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO)
    if log_dir is None:
        log_dir = os.environ.get(APP_HOME_ENV, os.path.expanduser(DEFAULT_APP_HOME))
    try:
        pathlib.Path(log_dir).mkdir(parents=True, exist_ok=True)
        handler = RotatingFileHandler(os.path.join(log_dir, LOG_FILE_NAME), maxBytes=5 * 1024 * 1024, backupCount=5)
    except OSError as e:
        logging.warning("init_logger: cannot write logs to {}: {}".format(log_dir, e))
        return
    handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(module)s:%(lineno)d - %(message)s"))
    root = logging.getLogger()
    # one log file per process, even when main() runs repeatedly
    for old in [h for h in root.handlers if isinstance(h, RotatingFileHandler)]:
        root.removeHandler(old)
        old.close()
    root.addHandler(handler)


def batch_indices(count, batch_size, rng):
    """ Mini-batches over a fresh permutation; the last partial batch is kept """
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]
