"""Reader and writer for the synthesis package's binary tensor container.

The layout is fixed by the consumer and reproduced here independently;
all integers are little-endian:

    magic   4 bytes  b"SKTF"
    version u32      currently 1
    mean    3 x f64  per-channel input means (RGB order)
    scale   f64      multiplicative input scale
    count   u32      number of records
    record  u32 name length, UTF-8 name, u8 dtype tag (0 = float64),
            u8 rank, u32 dims x rank, payload (C order)

Writing the same records twice produces identical bytes, so exports are
reproducible and diffable.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

MAGIC = b"SKTF"
VERSION = 1
DTYPE_F64 = 0

# The consumer rejects ranks above 8; never emit one.
MAX_RANK = 8


class TensorFormatError(ValueError):
    """A tensor file (or a record about to be written) violates the format."""


@dataclass
class TensorArchive:
    """One parsed file: normalization header plus named float64 tensors."""

    means: np.ndarray
    scale: float
    records: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)


def write_tensors(
    path,
    records: Mapping[str, np.ndarray],
    means: Sequence[float] = (0.0, 0.0, 0.0),
    scale: float = 1.0,
) -> None:
    """Serialize records in mapping order; every payload is upcast to f64."""
    means = [float(m) for m in means]
    if len(means) != 3:
        raise TensorFormatError("means must be three per-channel values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<3d", *means))
        fh.write(struct.pack("<d", float(scale)))
        fh.write(struct.pack("<I", len(records)))
        for name, value in records.items():
            encoded = name.encode("utf-8")
            if not encoded:
                raise TensorFormatError("record names must be non-empty")
            arr = np.asarray(value, dtype="<f8")
            if arr.ndim > MAX_RANK:
                raise TensorFormatError(f"record {name!r} has rank {arr.ndim} > {MAX_RANK}")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", DTYPE_F64, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_tensors(path) -> TensorArchive:
    """Parse one file; truncation, duplicates and junk bytes all raise."""
    with open(path, "rb") as fh:
        buf = fh.read()
    view = memoryview(buf)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise TensorFormatError(f"truncated file while reading {what}")
        piece = view[pos : pos + n]
        pos += n
        return piece

    if bytes(take(4, "magic")) != MAGIC:
        raise TensorFormatError("bad magic: not a tensor file")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    means = np.frombuffer(take(24, "means"), dtype="<f8").astype(np.float64)
    (scale,) = struct.unpack("<d", take(8, "scale"))
    (count,) = struct.unpack("<I", take(4, "record count"))

    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for i in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"record {i} name length"))
        try:
            name = bytes(take(name_len, f"record {i} name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TensorFormatError(f"record {i} name is not valid UTF-8") from exc
        if not name:
            raise TensorFormatError(f"record {i} has an empty name")
        if name in records:
            raise TensorFormatError(f"duplicate record name {name!r}")
        dtype_tag, rank = struct.unpack("<BB", take(2, f"record {name!r} header"))
        if dtype_tag != DTYPE_F64:
            raise TensorFormatError(f"record {name!r} has unsupported dtype tag {dtype_tag}")
        if rank > MAX_RANK:
            raise TensorFormatError(f"record {name!r} has rank {rank} > {MAX_RANK}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"record {name!r} dims"))
        size = 1
        for d in dims:
            size *= d
        payload = take(8 * size, f"record {name!r} payload")
        records[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    if pos != len(view):
        raise TensorFormatError(f"{len(view) - pos} trailing bytes after the final record")
    return TensorArchive(means=means, scale=float(scale), records=records)
