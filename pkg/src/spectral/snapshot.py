from __future__ import annotations

import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from src.common.errors import SnapshotFormatError
from src.common.io_utils import ensure_dir
from src.spectral.grid import BoxGrid, Field

# magic, dim (u8), points_per_axis (u32), box_length (f64), time (f64); little-endian
MAGIC = b"QNLS1"
HEADER = struct.Struct("<5sBIdd")


def encode_snapshot(f: Field, t: float) -> bytes:
    g = f.grid
    head = HEADER.pack(MAGIC, g.dim, g.points_per_axis, float(g.box_length), float(t))
    body = np.ascontiguousarray(f.values, dtype="<c16").tobytes(order="C")
    return head + body


def decode_snapshot(data: bytes) -> Tuple[Field, float]:
    if len(data) < HEADER.size:
        raise SnapshotFormatError(f"snapshot too short ({len(data)} bytes)")
    magic, dim, n, box_length, t = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    try:
        grid = BoxGrid(dim=dim, points_per_axis=n, box_length=box_length)
    except ValueError as e:
        raise SnapshotFormatError(f"bad snapshot header: {e}") from e
    expected = grid.size * 16
    body = data[HEADER.size:]
    if len(body) != expected:
        raise SnapshotFormatError(f"snapshot body has {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<c16").reshape(grid.shape)
    return Field(grid, values), float(t)


def write_snapshot(path: Path, f: Field, t: float) -> Path:
    ensure_dir(path.parent)
    path.write_bytes(encode_snapshot(f, t))
    return path


def read_snapshot(path: Path) -> Tuple[Field, float]:
    return decode_snapshot(Path(path).read_bytes())
