"""Versioned little-endian binary container used for model and index files.

Layout: 4-byte magic, uint32 version, uint32 length + JSON metadata
(UTF-8, sorted keys), uint32 array count, then per array: uint16 name
length + name, 1-byte dtype code, 1-byte ndim, ndim uint32 dims, raw
little-endian data. Arrays are stored sorted by name so identical content
always produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError

_DTYPES = {0: "<f8", 1: "<f4", 2: "<i8"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def write_container(
    path: str | Path,
    magic: bytes,
    version: int,
    meta: dict,
    arrays: dict[str, np.ndarray],
) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", version))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            if arr.dtype not in _DTYPE_CODES:
                arr = arr.astype("<f8")
            code = _DTYPE_CODES[np.dtype(arr.dtype.newbyteorder("<"))]
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype(_DTYPES[code]).tobytes())


def read_container(
    path: str | Path, magic: bytes
) -> tuple[int, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    view = memoryview(raw)

    def take(n: int) -> memoryview:
        nonlocal view
        if len(view) < n:
            raise CorruptionError(f"{path}: truncated container")
        chunk, view = view[:n], view[n:]
        return chunk

    if bytes(take(4)) != magic:
        raise FormatError(f"{path}: bad magic, expected {magic!r}")
    version = struct.unpack("<I", take(4))[0]
    meta_len = struct.unpack("<I", take(4))[0]
    meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
    count = struct.unpack("<I", take(4))[0]
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = struct.unpack("<H", take(2))[0]
        name = bytes(take(name_len)).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = np.dtype(_DTYPES[code])
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arrays[name] = np.frombuffer(take(size), dtype=dtype).reshape(shape).copy()
    if len(view):
        raise CorruptionError(f"{path}: {len(view)} trailing bytes")
    return version, meta, arrays
