# SPDX-License-Identifier: GPL-2.0-or-later

APP_HOME_ENV = "HEBB_CBIR_HOME"
DEFAULT_APP_HOME = "~/.hebbcbir"
LOG_FILE_NAME = "hebbcbir.log"

DATA_DIR_ENV = "HEBB_CBIR_DATA"
LONG_TESTS_ENV = "HEBB_CBIR_LONG"

IMAGE_SHAPE = (3, 32, 32)
IMAGE_BYTES = 3 * 32 * 32

CIFAR10_CLASSES = 10
CIFAR100_CLASSES = 100
TRAIN_SIZE = 40000
VALIDATION_SIZE = 10000

# s% of the training split carries labels
REGIMES = (1, 2, 3, 4, 5, 10, 25, 100)

NUM_DEEP_LAYERS = 5

# weight decay differs per dataset
WEIGHT_DECAY = {
    "cifar10": 5e-2,
    "cifar100": 1e-2,
}

# file extensions
EXT_CHECKPOINT = ".ckpt"
EXT_FEATURES = ".feat"
EXT_METRICS = ".metrics.csv"
EXT_RUN = ".run"

# exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
