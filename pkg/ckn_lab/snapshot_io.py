"""Binary snapshot files.

Layout (little-endian, no padding)::

    magic   4s   b"CKNF"
    version u32  1
    n       u32  n_per_axis
    L       f64  box_length
    t       f64  time
    3*n^3   f64  velocity, component-major, x fastest within a component
    n^3     f64  pressure, x fastest
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import RejectedInputError, SnapshotFormatError
from .fields import FieldSnapshot
from .grid import TorusGrid

logger = logging.getLogger(__name__)

MAGIC = b"CKNF"
VERSION = 1
HEADER = struct.Struct("<4sIIdd")


def encode_snapshot(snapshot: FieldSnapshot) -> bytes:
    grid = snapshot.grid
    header = HEADER.pack(MAGIC, VERSION, grid.n_per_axis, grid.box_length, snapshot.time)
    velocity = np.stack([c.ravel(order="F") for c in snapshot.velocity])
    body = velocity.astype("<f8").tobytes() + snapshot.pressure.ravel(order="F").astype(
        "<f8"
    ).tobytes()
    return header + body


def decode_snapshot(
    data: bytes,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    validate: bool = True,
) -> FieldSnapshot:
    """Parse snapshot bytes; raises SnapshotFormatError on malformed input."""
    if len(data) < HEADER.size:
        raise SnapshotFormatError(
            f"truncated header: expected {HEADER.size} bytes, got {len(data)}",
            offset=len(data),
            expected=HEADER.size,
            actual=len(data),
        )
    magic, version, n, box_length, time = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise SnapshotFormatError(
            f"unsupported version {version}, expected {VERSION}", offset=4
        )
    try:
        grid = TorusGrid(n, box_length)
    except RejectedInputError as exc:
        raise SnapshotFormatError(f"invalid grid in header: {exc}", offset=8) from exc
    cells = n**3
    expected = HEADER.size + 8 * 4 * cells
    if len(data) != expected:
        kind = "truncated payload" if len(data) < expected else "trailing bytes"
        raise SnapshotFormatError(
            f"{kind}: expected {expected} bytes, got {len(data)}",
            offset=min(len(data), expected),
            expected=expected,
            actual=len(data),
        )
    values = np.frombuffer(data, dtype="<f8", offset=HEADER.size).astype(np.float64)
    velocity = np.stack(
        [values[i * cells : (i + 1) * cells].reshape(grid.shape, order="F") for i in range(3)]
    )
    pressure = values[3 * cells :].reshape(grid.shape, order="F")
    return FieldSnapshot.from_velocity(
        grid, velocity, time, pressure, tolerances=tolerances, validate=validate
    )


def write_snapshot(path: str | Path, snapshot: FieldSnapshot) -> None:
    Path(path).write_bytes(encode_snapshot(snapshot))
    logger.debug("Wrote snapshot t=%.6f to %s", snapshot.time, path)


def read_snapshot(
    path: str | Path,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    validate: bool = True,
) -> FieldSnapshot:
    return decode_snapshot(
        Path(path).read_bytes(), tolerances=tolerances, validate=validate
    )
