"""Binary file formats for vector sets (BEMB) and packed codes (BCOD).

Both are little-endian with a fixed header:

    BEMB: b"BEMB" u32 version=1, u64 N, u64 p, then N*p float32 row-major
    BCOD: b"BCOD" u32 version=1, u64 N, u64 m, u32 B, then N rows of ceil(m/64) u64
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .core import BinembedError, CodeBatch, Dataset, n_words

VERSION = 1
_BEMB_HEADER = struct.Struct("<4sIQQ")
_BCOD_HEADER = struct.Struct("<4sIQQI")


class FormatError(BinembedError):
    pass


def write_vectors(path, data: Dataset | np.ndarray) -> Path:
    rows = data.rows if isinstance(data, Dataset) else np.asarray(data)
    if rows.ndim != 2:
        raise FormatError(f"vectors must be 2-D, got shape {rows.shape}")
    n, p = rows.shape
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_BEMB_HEADER.pack(b"BEMB", VERSION, n, p))
        f.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())
    return path


def read_vectors(path) -> np.ndarray:
    """Return the stored (N, p) float32 matrix."""
    raw = Path(path).read_bytes()
    if len(raw) < _BEMB_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, p = _BEMB_HEADER.unpack_from(raw)
    if magic != b"BEMB":
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    payload = raw[_BEMB_HEADER.size:]
    if len(payload) != 4 * n * p:
        raise FormatError(f"{path}: expected {4 * n * p} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(n, p).astype(np.float32)


def read_dataset(path) -> Dataset:
    """Read a BEMB file and renormalize rows, since float32 storage loses ~1e-7 of norm."""
    return Dataset.normalized(read_vectors(path).astype(np.float64))


def write_codes(path, codes: CodeBatch) -> Path:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_BCOD_HEADER.pack(b"BCOD", VERSION, len(codes), codes.n_bits, codes.n_blocks))
        f.write(np.ascontiguousarray(codes.words, dtype="<u8").tobytes())
    return path


def read_codes(path) -> CodeBatch:
    raw = Path(path).read_bytes()
    if len(raw) < _BCOD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, m, b = _BCOD_HEADER.unpack_from(raw)
    if magic != b"BCOD":
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    w = n_words(m)
    payload = raw[_BCOD_HEADER.size:]
    if len(payload) != 8 * n * w:
        raise FormatError(f"{path}: expected {8 * n * w} payload bytes, found {len(payload)}")
    words = np.frombuffer(payload, dtype="<u8").reshape(n, w).astype(np.uint64)
    return CodeBatch(words, m, b)


def sha256sum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
