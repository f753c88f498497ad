"""Portable binary weight files.

Layout (all integers little-endian):
magic "PSWT" | u32 version | u32 entry count | entries.
Entry: u16 name length | UTF-8 name | u8 ndim | u32 dims[ndim] |
float32 payload (row-major).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"PSWT"
VERSION = 1


def write_weight_file(path, entries: dict[str, np.ndarray]) -> None:
    """Write named float32 arrays in dict order."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(entries))
    for name, arr in entries.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", data.ndim)
        out += struct.pack(f"<{data.ndim}I", *data.shape)
        out += data.tobytes()
    Path(path).write_bytes(bytes(out))


def read_weight_file(path) -> dict[str, np.ndarray]:
    """Read a weight file back to an ordered name -> float32 array dict."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad weight-file magic {data[:4]!r}, expected {MAGIC!r}")
    try:
        version, count = struct.unpack_from("<II", data, 4)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated weight-file header") from exc
    if version != VERSION:
        raise FormatError(f"{path}: unsupported weight-file version {version}, expected {VERSION}")
    entries: dict[str, np.ndarray] = {}
    offset = 12
    for i in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset : offset + name_len].decode("utf-8")
            if len(data) < offset + name_len:
                raise FormatError(f"{path}: truncated name in entry {i}")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", data, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            payload = data[offset : offset + 4 * size]
            if len(payload) != 4 * size:
                raise FormatError(f"{path}: truncated payload in entry {i} ({name})")
            offset += 4 * size
        except struct.error as exc:
            raise FormatError(f"{path}: truncated entry {i}") from exc
        if name in entries:
            raise FormatError(f"{path}: duplicate entry name {name!r}")
        entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return entries
