"""
GPCK parameter checkpoints.

Layout (all integers little-endian):
    b"GPCK" | version u32 | count u32
    per tensor: name_len u32 | name utf-8 | rank u32 | dims u32[rank]
                | dtype tag u8 | raw little-endian scalars
"""
import hashlib
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from gpicl_lab.errors import FormatError

MAGIC = b"GPCK"
VERSION = 1

_TAG_BY_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPE_BY_TAG = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def encode_checkpoint(params: Mapping[str, np.ndarray]) -> bytes:
    chunks = [struct.pack("<4sII", MAGIC, VERSION, len(params))]
    for name, value in params.items():
        arr = np.asarray(value)
        if arr.dtype not in _TAG_BY_DTYPE:
            arr = arr.astype(np.float32)
        tag = _TAG_BY_DTYPE[arr.dtype]
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(struct.pack("<B", tag))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPE_BY_TAG[tag]).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"Checkpoint truncated at byte {self.pos} (needed {n} more)")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(buf: bytes) -> dict[str, np.ndarray]:
    reader = _Reader(buf)
    magic, version, count = reader.unpack("<4sII")
    if magic != MAGIC:
        raise FormatError(f"Bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"Unsupported checkpoint version {version}")

    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}I") if rank else ()
        (tag,) = reader.unpack("<B")
        if tag not in _DTYPE_BY_TAG:
            raise FormatError(f"Unknown dtype tag {tag} for {name!r}")
        dtype = _DTYPE_BY_TAG[tag]
        size = int(np.prod(dims)) if dims else 1
        raw = reader.take(size * dtype.itemsize)
        params[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))
    if reader.pos != len(buf):
        raise FormatError(f"{len(buf) - reader.pos} trailing bytes after last tensor")
    return params


def save_checkpoint(path: Path | str, params: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params))
    return path


def load_checkpoint(path: Path | str) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def params_checksum(params: Mapping[str, np.ndarray]) -> str:
    return hashlib.sha256(encode_checkpoint(params)).hexdigest()
