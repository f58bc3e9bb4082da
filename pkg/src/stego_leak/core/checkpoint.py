"""
Versioned binary tensor container.

Layout (all integers unsigned 64-bit little-endian)::

    b"STEGO1"  (the trailing digit is the format version)
    repeated until EOF:
        name_len  name(utf-8)  rank  dims[rank]  values[prod(dims)] as float64 LE
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Dict, Mapping, Union

import numpy as np

from .errors import CheckpointError

MAGIC_PREFIX = b"STEGO"
VERSION = 1
MAGIC = MAGIC_PREFIX + str(VERSION).encode("ascii")

_U64 = struct.Struct("<Q")


def _write_u64(fh: BinaryIO, value: int) -> None:
    fh.write(_U64.pack(value))


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    chunk = fh.read(n)
    if len(chunk) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return chunk


def _read_u64(fh: BinaryIO, what: str) -> int:
    return _U64.unpack(_read_exact(fh, _U64.size, what))[0]


def write_tensors(path: Union[str, Path], tensors: Mapping[str, np.ndarray]) -> None:
    """Write named arrays in insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, array in tensors.items():
            encoded = name.encode("utf-8")
            array = np.asarray(array)
            _write_u64(fh, len(encoded))
            fh.write(encoded)
            _write_u64(fh, array.ndim)
            for dim in array.shape:
                _write_u64(fh, dim)
            fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def read_tensors(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """
    Read every named array from a checkpoint file.

    Raises:
        CheckpointError: On bad magic, unknown version, truncation or duplicate names
    """
    tensors: Dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            if magic.startswith(MAGIC_PREFIX) and len(magic) == len(MAGIC):
                raise CheckpointError(f"{path}: unsupported checkpoint version {magic[-1:].decode('ascii', 'replace')}")
            raise CheckpointError(f"{path}: not a stego checkpoint (magic {magic!r})")

        while True:
            head = fh.read(_U64.size)
            if not head:
                break
            if len(head) != _U64.size:
                raise CheckpointError("truncated checkpoint while reading name length")
            name_len = _U64.unpack(head)[0]
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            rank = _read_u64(fh, f"rank of {name}")
            dims = tuple(_read_u64(fh, f"dims of {name}") for _ in range(rank))
            count = int(np.prod(dims, dtype=np.int64)) if dims else 1
            raw = _read_exact(fh, 8 * count, f"values of {name}")
            if name in tensors:
                raise CheckpointError(f"duplicate parameter name {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    return tensors
