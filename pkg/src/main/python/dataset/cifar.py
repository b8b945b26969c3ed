# SPDX-License-Identifier: GPL-2.0-or-later
import logging
import os

import numpy as np

from constants import IMAGE_BYTES, IMAGE_SHAPE, CIFAR10_CLASSES, CIFAR100_CLASSES

CIFAR10_TRAIN_FILES = ["data_batch_{}.bin".format(x) for x in range(1, 6)]
CIFAR10_TEST_FILES = ["test_batch.bin"]
CIFAR100_TRAIN_FILES = ["train.bin"]
CIFAR100_TEST_FILES = ["test.bin"]

# subdirectories the official archives extract to
ARCHIVE_DIRS = {
    "cifar10": "cifar-10-batches-bin",
    "cifar100": "cifar-100-binary",
}

RECORDS_PER_FILE = {
    "data_batch_1.bin": 10000, "data_batch_2.bin": 10000, "data_batch_3.bin": 10000,
    "data_batch_4.bin": 10000, "data_batch_5.bin": 10000, "test_batch.bin": 10000,
    "train.bin": 50000, "test.bin": 10000,
}


class CifarError(Exception):
    pass


class MissingFileError(CifarError):
    pass


class FileSizeError(CifarError):
    pass


class TruncatedRecordError(CifarError):
    pass


def record_size(fine):
    # CIFAR-100 records carry a coarse and a fine label byte
    return IMAGE_BYTES + (2 if fine else 1)


def parse_records(data, fine=False, source="<bytes>", num_classes=None):
    """
    Decodes binary CIFAR records: label byte(s) then 3072 pixel bytes (R, G, B planes,
    each 32x32 row-major). Returns (pixels uint8 [n,3,32,32], labels int64 [n]); for
    CIFAR-100 the fine label is used.
    """
    size = record_size(fine)
    if len(data) % size != 0:
        offset = (len(data) // size) * size
        raise TruncatedRecordError("{}: truncated record at byte offset {} ({} of {} bytes present)".format(
            source, offset, len(data) - offset, size))

    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, size)
    labels = records[:, size - IMAGE_BYTES - 1].astype(np.int64)
    pixels = records[:, size - IMAGE_BYTES:].reshape((-1,) + IMAGE_SHAPE).copy()
    if num_classes is not None and len(labels) and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise CifarError("{}: label {} out of range at byte offset {}".format(source, labels[bad], bad * size))
    return pixels, labels


def serialize_records(pixels, labels, coarse_labels=None):
    """ Inverse of parse_records; coarse_labels selects the CIFAR-100 layout """
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(len(labels), IMAGE_BYTES)
    head = [np.asarray(labels, dtype=np.uint8)[:, None]]
    if coarse_labels is not None:
        head.insert(0, np.asarray(coarse_labels, dtype=np.uint8)[:, None])
    return np.hstack(head + [pixels]).tobytes()


def read_file(path, fine, num_classes, strict=True):
    if not os.path.isfile(path):
        raise MissingFileError("missing CIFAR file {}".format(path))
    with open(path, "rb") as inf:
        data = inf.read()
    name = os.path.basename(path)
    if strict and name in RECORDS_PER_FILE:
        expected = RECORDS_PER_FILE[name] * record_size(fine)
        # a file that is not a whole number of records is reported as truncated instead
        if len(data) != expected and len(data) % record_size(fine) == 0:
            raise FileSizeError("{}: wrong file size, expected={} got={}".format(path, expected, len(data)))
    return parse_records(data, fine, path, num_classes)


def resolve_dir(directory, name):
    """ Accepts either the directory holding the .bin files or its parent """
    nested = os.path.join(directory, ARCHIVE_DIRS[name])
    if os.path.isdir(nested):
        return nested
    return directory


class Dataset:
    """
    Images with aligned integer labels.

    `images` may hold raw uint8 pixels, which images_at() scales to [0,1]; when a
    per-channel normalization (mean, std) is attached it is applied on access.
    """

    def __init__(self, images, labels, num_classes, tag="train", normalization=None, name=None):
        labels = np.asarray(labels)
        if len(images) != len(labels):
            raise ValueError("dataset: {} images but {} labels".format(len(images), len(labels)))
        self._images = images
        self._labels = labels
        self.num_classes = num_classes
        self.tag = tag
        self.normalization = normalization
        self.name = name

    def __len__(self):
        return len(self._labels)

    @property
    def labels(self):
        return self._labels

    @property
    def sample_shape(self):
        return tuple(self._images.shape[1:])

    def raw_at(self, idx):
        return self._images[idx]

    def images_at(self, idx):
        return to_float(self.raw_at(idx), self.normalization)

    def labels_at(self, idx):
        return self._labels[idx]

    def batch(self, idx):
        return self.images_at(idx), self.labels_at(idx)

    def subset(self, indices, tag=None):
        return SubsetDataset(self, np.asarray(indices, dtype=np.int64), tag or self.tag)

    def with_normalization(self, normalization, tag=None):
        return Dataset(self._images, self._labels, self.num_classes, tag or self.tag, normalization, self.name)


class SubsetDataset(Dataset):
    """ View on a parent dataset through an index vector; images are not copied """

    def __init__(self, parent, indices, tag):
        self.parent = parent
        self.indices = indices
        self.num_classes = parent.num_classes
        self.tag = tag
        self.name = parent.name
        self.normalization = None

    def __len__(self):
        return len(self.indices)

    @property
    def labels(self):
        return self.parent.labels_at(self.indices)

    @property
    def sample_shape(self):
        return self.parent.sample_shape

    def raw_at(self, idx):
        return self.parent.raw_at(self.indices[idx])

    def images_at(self, idx):
        return self.parent.images_at(self.indices[idx])

    def labels_at(self, idx):
        return self.parent.labels_at(self.indices[idx])

    def with_normalization(self, normalization, tag=None):
        return self.parent.with_normalization(normalization).subset(self.indices, tag or self.tag)


class ConcatDataset(Dataset):
    """ Several datasets read back to back, e.g. train + validation as a retrieval database """

    def __init__(self, parts, tag="database"):
        if not parts:
            raise ValueError("ConcatDataset needs at least one part")
        self.parts = list(parts)
        self.num_classes = parts[0].num_classes
        self.tag = tag
        self.name = parts[0].name
        self.normalization = None
        self.offsets = np.cumsum([0] + [len(p) for p in self.parts])

    def __len__(self):
        return int(self.offsets[-1])

    @property
    def labels(self):
        return np.concatenate([p.labels for p in self.parts])

    @property
    def sample_shape(self):
        return self.parts[0].sample_shape

    def _dispatch(self, idx, getter):
        idx = np.asarray(idx, dtype=np.int64)
        part = np.searchsorted(self.offsets, idx, side="right") - 1
        out = None
        for p in np.unique(part):
            sel = part == p
            values = getter(self.parts[p], idx[sel] - self.offsets[p])
            if out is None:
                out = np.empty((len(idx),) + values.shape[1:], dtype=values.dtype)
            out[sel] = values
        return out

    def raw_at(self, idx):
        return self._dispatch(idx, lambda part, i: part.raw_at(i))

    def images_at(self, idx):
        return self._dispatch(idx, lambda part, i: part.images_at(i))

    def labels_at(self, idx):
        return self._dispatch(idx, lambda part, i: part.labels_at(i))

    def with_normalization(self, normalization, tag=None):
        return ConcatDataset([p.with_normalization(normalization) for p in self.parts], tag or self.tag)


def to_float(raw, normalization=None):
    x = raw.astype(np.float32)
    if raw.dtype == np.uint8:
        x /= 255.0
    if normalization is not None:
        mean, std = normalization
        shape = (1, -1) + (1,) * (x.ndim - 2)
        x = (x - np.asarray(mean, dtype=np.float32).reshape(shape)) / np.asarray(std, dtype=np.float32).reshape(shape)
    return x


def channel_stats(dataset, chunk=5000):
    """ Per-channel mean and std over the dataset's [0,1]-scaled pixels, float64 accumulation """
    channels = dataset.sample_shape[0]
    total = np.zeros(channels)
    total_sq = np.zeros(channels)
    count = 0
    for start in range(0, len(dataset), chunk):
        idx = np.arange(start, min(start + chunk, len(dataset)))
        x = to_float(dataset.raw_at(idx)).astype(np.float64)
        axes = (0,) + tuple(range(2, x.ndim))
        total += x.sum(axis=axes)
        total_sq += (x * x).sum(axis=axes)
        count += x.size // channels
    mean = total / count
    std = np.sqrt(np.maximum(total_sq / count - mean * mean, 0))
    std[std == 0] = 1.0
    return mean.tolist(), std.tolist()


def _load(directory, name, files, fine, num_classes, tag, strict):
    directory = resolve_dir(directory, name)
    pixels, labels = [], []
    for fn in files:
        p, l = read_file(os.path.join(directory, fn), fine, num_classes, strict)
        pixels.append(p)
        labels.append(l)
    pixels = np.concatenate(pixels)
    labels = np.concatenate(labels)
    logging.info("loaded {} {} records from {}".format(len(labels), name, directory))
    return Dataset(pixels, labels, num_classes, tag, name=name)


def load_cifar10(directory, part="train", strict=True):
    files = CIFAR10_TRAIN_FILES if part == "train" else CIFAR10_TEST_FILES
    return _load(directory, "cifar10", files, False, CIFAR10_CLASSES, part, strict)


def load_cifar100(directory, part="train", strict=True):
    files = CIFAR100_TRAIN_FILES if part == "train" else CIFAR100_TEST_FILES
    return _load(directory, "cifar100", files, True, CIFAR100_CLASSES, part, strict)


LOADERS = {
    "cifar10": load_cifar10,
    "cifar100": load_cifar100,
}


def load_dataset(directory, name, part="train", strict=True):
    if name not in LOADERS:
        raise CifarError("unknown dataset {}, expected one of {}".format(name, sorted(LOADERS)))
    if not os.path.isdir(directory):
        raise MissingFileError("data directory {} does not exist".format(directory))
    return LOADERS[name](directory, part, strict)
