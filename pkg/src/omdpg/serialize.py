"""Versioned binary container for named float/int arrays.

Layout: 8-byte magic, uint32 format version, uint32 header length, a UTF-8
JSON header listing (name, dtype, shape) plus free-form metadata, then the
raw little-endian array bytes in header order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ShapeError

FORMAT_VERSION = 1


def write_arrays(path, magic: bytes, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    entries, blobs = [], []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<")
        entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape)})
        blobs.append(arr.astype(dt, copy=False).tobytes())
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)
    return path


def read_arrays(path, magic: bytes) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:8] != magic:
        raise ShapeError(f"{path}: not a {magic!r} file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise ShapeError(f"{path}: unsupported format version {version}")
    header = json.loads(data[16:16 + hlen])
    offset = 16 + hlen
    out = {}
    for e in header["arrays"]:
        dt = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(e["shape"])
        out[e["name"]] = arr.astype(dt.newbyteorder("="))
        offset += count * dt.itemsize
    if offset != len(data):
        raise ShapeError(f"{path}: trailing or missing bytes")
    return out, header["meta"]
