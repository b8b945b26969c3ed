# SPDX-License-Identifier: GPL-2.0-or-later
"""
Binary container shared by checkpoints and feature stores:

    magic        8 bytes   b"HEBBCBIR"
    version      uint16 LE
    header_len   uint32 LE
    header       header_len bytes of UTF-8 JSON: kind, meta, tensor table (name, shape,
                 dtype) and the sha256 of the payload
    payload      raw little-endian tensors in tensor-table order
"""
import hashlib
import json
import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"HEBBCBIR"
FORMAT_VERSION = 1
PREAMBLE = "<8sHI"
PREAMBLE_SIZE = struct.calcsize(PREAMBLE)

DTYPES = {
    "<f4": np.dtype("<f4"),
    "<i4": np.dtype("<i4"),
}


class FormatError(Exception):
    pass


class VersionError(FormatError):
    pass


class MagicError(VersionError):
    pass


class IntegrityError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


def encode(kind, meta, tensors):
    """ tensors: iterable of (name, array, dtype code) """
    table = []
    payload = []
    for name, arr, code in tensors:
        if code not in DTYPES:
            raise ValueError("unsupported payload dtype {}".format(code))
        data = np.ascontiguousarray(arr, dtype=DTYPES[code])
        table.append({"name": name, "shape": list(data.shape), "dtype": code})
        payload.append(data.tobytes())
    payload = b"".join(payload)
    header = json.dumps({
        "kind": kind,
        "meta": meta,
        "tensors": table,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }, sort_keys=True, indent=1).encode("utf-8")
    return struct.pack(PREAMBLE, MAGIC, FORMAT_VERSION, len(header)) + header + payload


def decode(data, kind=None, source="<bytes>"):
    """ Returns (meta, OrderedDict name -> array) """
    if len(data) < PREAMBLE_SIZE:
        raise TruncatedError("{}: file too short ({} bytes)".format(source, len(data)))
    magic, version, header_len = struct.unpack(PREAMBLE, data[:PREAMBLE_SIZE])
    if magic != MAGIC:
        raise MagicError("{}: bad magic, expected={} got={}".format(source, MAGIC, magic))
    if version != FORMAT_VERSION:
        raise VersionError("{}: unsupported format version, expected={} got={}".format(
            source, FORMAT_VERSION, version))
    if len(data) < PREAMBLE_SIZE + header_len:
        raise TruncatedError("{}: header truncated".format(source))
    try:
        header = json.loads(data[PREAMBLE_SIZE:PREAMBLE_SIZE + header_len].decode("utf-8"))
    except ValueError as e:
        raise IntegrityError("{}: unreadable header: {}".format(source, e))
    if kind is not None and header.get("kind") != kind:
        raise FormatError("{}: expected a {} file, got {}".format(source, kind, header.get("kind")))

    payload = data[PREAMBLE_SIZE + header_len:]
    expected = 0
    for entry in header["tensors"]:
        expected += int(np.prod(entry["shape"], dtype=np.int64)) * DTYPES[entry["dtype"]].itemsize
    if len(payload) < expected:
        raise TruncatedError("{}: payload truncated, expected={} got={} bytes".format(source, expected, len(payload)))
    if len(payload) != expected:
        raise IntegrityError("{}: header declares {} payload bytes, file holds {}".format(
            source, expected, len(payload)))
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise IntegrityError("{}: payload failed integrity check".format(source))

    tensors = OrderedDict()
    offset = 0
    for entry in header["tensors"]:
        dtype = DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(dtype.newbyteorder("="))
        offset += count * dtype.itemsize
    return header["meta"], tensors


def write_container(path, kind, meta, tensors):
    data = encode(kind, meta, tensors)
    with open(path, "wb") as outf:
        outf.write(data)
    return hashlib.sha256(data).hexdigest()


def read_container(path, kind=None):
    with open(path, "rb") as inf:
        data = inf.read()
    return decode(data, kind, path)
