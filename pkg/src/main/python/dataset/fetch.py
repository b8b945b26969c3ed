# SPDX-License-Identifier: GPL-2.0-or-later
import logging
import os
import ssl
import tarfile
import urllib.request

import certifi

from dataset.cifar import ARCHIVE_DIRS

URLS = {
    "cifar10": "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
    "cifar100": "https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz",
}


def ssl_context():
    # some platforms ship python without a CA bundle
    if ssl.get_default_verify_paths().cafile is None:
        return ssl.create_default_context(cafile=certifi.where())
    return ssl.create_default_context()


def fetch_cifar(name, dest):
    """ Downloads and unpacks the official binary archive into dest; returns the data directory """
    if name not in URLS:
        raise ValueError("unknown dataset {}, expected one of {}".format(name, sorted(URLS)))
    target = os.path.join(dest, ARCHIVE_DIRS[name])
    if os.path.isdir(target):
        logging.info("fetch: {} already present in {}".format(name, target))
        return target

    os.makedirs(dest, exist_ok=True)
    archive = os.path.join(dest, os.path.basename(URLS[name]))
    logging.info("fetch: downloading {} to {}".format(URLS[name], archive))
    with urllib.request.urlopen(URLS[name], context=ssl_context()) as response, open(archive, "wb") as outf:
        while True:
            block = response.read(1 << 20)
            if not block:
                break
            outf.write(block)

    with tarfile.open(archive, "r:gz") as tar:
        for member in tar.getmembers():
            path = os.path.realpath(os.path.join(dest, member.name))
            if not path.startswith(os.path.realpath(dest) + os.sep):
                raise RuntimeError("fetch: archive member {} escapes {}".format(member.name, dest))
        tar.extractall(dest)
    os.remove(archive)
    return target
