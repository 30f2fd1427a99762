"""Binary container for named float64 tensors.

Layout, all integers little-endian:

    magic   4 bytes  b"SKTF"
    version u32      currently 1
    mean    3 x f64  per-channel input means (RGB order)
    scale   f64      multiplicative input scale
    count   u32      number of records

followed by `count` records:

    name_len u32, name (UTF-8), dtype u8 (0 = float64), rank u8,
    dims u32 x rank, payload (product(dims) float64 values, C order)

The format is the contract between the weight exporter and this package:
anything that writes it can feed the feature extractor here.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence

import numpy as np

MAGIC = b"SKTF"
VERSION = 1
DTYPE_F64 = 0
_MAX_RANK = 8


@dataclass
class TensorFileData:
    """Parsed contents: input normalization header plus named tensors."""

    means: np.ndarray
    scale: float
    records: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    @property
    def mean_gray(self) -> float:
        """Single-channel mean for grayscale inputs: the channel means averaged."""
        return float(np.mean(self.means))


class TensorFileError(ValueError):
    """Raised when a tensor file is malformed."""


def write_tensorfile(
    path,
    records: Mapping[str, np.ndarray],
    means: Sequence[float] = (0.0, 0.0, 0.0),
    scale: float = 1.0,
) -> None:
    """Serialize named tensors; record order follows the mapping's order."""
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (3,):
        raise TensorFileError("means must be three per-channel values")
    chunks = [MAGIC, struct.pack("<I", VERSION), means.tobytes(), struct.pack("<d", float(scale))]
    chunks.append(struct.pack("<I", len(records)))
    for name, arr in records.items():
        raw = name.encode("utf-8")
        if not raw:
            raise TensorFileError("record names must be non-empty")
        # asarray, not ascontiguousarray: the latter silently promotes 0-d to 1-d,
        # and tobytes() already serializes any layout in C order.
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim > _MAX_RANK:
            raise TensorFileError(f"record {name!r} has rank {arr.ndim} > {_MAX_RANK}")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BB", DTYPE_F64, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_tensorfile(path) -> TensorFileData:
    """Parse a tensor file, rejecting malformed or truncated input."""
    with open(path, "rb") as fh:
        buf = fh.read()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(buf):
            raise TensorFileError(f"truncated file: ran out of bytes reading {what}")
        piece = buf[off : off + n]
        off += n
        return piece

    if take(4, "magic") != MAGIC:
        raise TensorFileError("bad magic: not a tensor file")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise TensorFileError(f"unsupported version {version}")
    means = np.frombuffer(take(24, "means"), dtype="<f8").astype(np.float64)
    (scale,) = struct.unpack("<d", take(8, "scale"))
    (count,) = struct.unpack("<I", take(4, "record count"))
    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for i in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"record {i} name length"))
        try:
            name = take(name_len, f"record {i} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TensorFileError(f"record {i} name is not valid UTF-8") from exc
        if not name:
            raise TensorFileError(f"record {i} has an empty name")
        if name in records:
            raise TensorFileError(f"duplicate record name {name!r}")
        dtype, rank = struct.unpack("<BB", take(2, f"record {name!r} dtype/rank"))
        if dtype != DTYPE_F64:
            raise TensorFileError(f"record {name!r} has unsupported dtype tag {dtype}")
        if rank > _MAX_RANK:
            raise TensorFileError(f"record {name!r} has rank {rank} > {_MAX_RANK}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"record {name!r} dims"))
        size = 1
        for d in dims:
            size *= d
        payload = take(8 * size, f"record {name!r} payload")
        records[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    if off != len(buf):
        raise TensorFileError(f"{len(buf) - off} trailing bytes after the final record")
    return TensorFileData(means=means, scale=float(scale), records=records)
