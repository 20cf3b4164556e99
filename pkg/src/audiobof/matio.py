"""Binary matrix persistence.

All trained artifacts (feature tables, model weights) are stored in a
single trivially parseable container: magic ``DBOF``, then three
little-endian uint32 fields (version, rows, cols), then rows*cols
little-endian float32 values in row-major order.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DBOF"
VERSION = 1

_HEADER = struct.Struct("<4sIII")


def save_matrix(path, values):
    """Write a 1-D or 2-D array to `path`. 1-D input is stored as one row."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected 1-D or 2-D array, got ndim={arr.ndim}")
    rows, cols = arr.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_matrix(path):
    """Read a matrix written by `save_matrix`. Always returns a 2-D float32 array."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read(4 * rows * cols)
    if len(payload) != 4 * rows * cols:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def load_vector(path):
    """Read a single-row matrix back as a 1-D array."""
    mat = load_matrix(path)
    if mat.shape[0] != 1:
        raise ValueError(f"{path}: expected a single row, got {mat.shape[0]}")
    return mat[0]
