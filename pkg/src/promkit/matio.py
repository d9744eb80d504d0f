"""Binary matrix file format shared by all pipeline artifacts.

Layout: magic bytes ``PRMF``, format version as little-endian u32, then the
row and column counts as little-endian u64, then ``rows * cols`` IEEE-754
binary64 values in column-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ArtifactError

MAGIC = b"PRMF"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def write_matrix(path: str | Path, a: np.ndarray) -> None:
    a = np.asarray(a, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ArtifactError(f"cannot serialize array of dimension {a.ndim}")
    header = _HEADER.pack(MAGIC, VERSION, a.shape[0], a.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a.ravel(order="F").tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ArtifactError(f"{path}: truncated matrix file")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ArtifactError(f"{path}: bad magic bytes {magic!r}")
    if version != VERSION:
        raise ArtifactError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ArtifactError(
            f"{path}: payload size mismatch, expected {expected} bytes, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return data.reshape((rows, cols), order="F").copy()
