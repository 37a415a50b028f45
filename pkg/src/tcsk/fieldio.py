"""Binary field files and atomic writes.

Layout (all little-endian)::

    b"TCSK" | u32 version = 1 | u32 n | 2n x u32 axis sizes | float64 samples

Samples are row-major with the last axis fastest, matching ``ScalarField``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import FieldFileError
from .grid import ScalarField, TorusGrid

MAGIC = b"TCSK"
VERSION = 1


def atomic_write_bytes(path, data):
    """Write ``data`` to a sibling temp file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def encode_field(f):
    grid = f.grid
    header = MAGIC + struct.pack("<II", VERSION, grid.n) + struct.pack(f"<{grid.ndim}I", *grid.sizes)
    return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def decode_field(data):
    if len(data) < 12 or data[:4] != MAGIC:
        raise FieldFileError("not a TCSK field file (bad magic)")
    version, n = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FieldFileError(f"unsupported TCSK version {version}")
    if n not in (1, 2):
        raise FieldFileError(f"malformed header: complex dimension {n}")
    head = 12 + 8 * n
    if len(data) < head:
        raise FieldFileError("malformed header: truncated axis sizes")
    sizes = struct.unpack_from(f"<{2 * n}I", data, 12)
    try:
        grid = TorusGrid(n, sizes)
    except ValueError as exc:
        raise FieldFileError(f"malformed header: {exc}") from None
    expected = 8 * grid.npoints
    if len(data) - head != expected:
        raise FieldFileError(f"payload is {len(data) - head} bytes, expected {expected}")
    vals = np.frombuffer(data, dtype="<f8", offset=head).reshape(grid.shape)
    return ScalarField(grid, vals)


def write_field(path, f):
    atomic_write_bytes(path, encode_field(f))


def read_field(path):
    return decode_field(Path(path).read_bytes())
