"""Field and table persistence.

Binary field layout (all little-endian)::

    offset  size  content
    0       4     magic b"LSCF"
    4       4     version (u32, currently 1)
    8       4     d (u32)
    12      4     L (u32)
    16      4     n (u32)
    20      8     eps (f64)
    28      8n^d  field values (f64, row-major)

Tables are CSV with a header row; floats are written with 17 significant
digits so output is exact and byte-stable.  Every table gets a JSON sidecar
``<name>.json`` with the config hash, seed and ``git describe`` string.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import subprocess
from pathlib import Path

import numpy as np

from .errors import LscfError
from .grid import GridSpec

MAGIC = b"LSCF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIId")


class IoError(LscfError, OSError):
    pass


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_field(path, grid: GridSpec, values) -> Path:
    """Write ``values`` in the binary field format."""
    arr = np.ascontiguousarray(grid.check(values), dtype="<f8")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, grid.d, grid.L, grid.n, grid.eps))
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_field(path) -> tuple[GridSpec, np.ndarray]:
    """Read a binary field; returns ``(grid, values)``."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise IoError(f"{path}: truncated header")
    magic, version, d, L, n, eps = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise IoError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise IoError(f"{path}: unsupported version {version}")
    grid = GridSpec(d, L, n, eps)
    count = grid.size
    if len(blob) != _HEADER.size + 8 * count:
        raise IoError(f"{path}: expected {count} values, file size {len(blob)}")
    values = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size, count=count).astype(float).reshape(grid.shape)
    return grid, values


def write_table(path, header, rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_field_csv(path, grid: GridSpec, values) -> Path:
    """Field as CSV: one index column per axis, then the value."""
    arr = grid.check(values)
    idx = np.indices(grid.shape).reshape(grid.d, -1).T
    header = [f"i{a}" for a in range(grid.d)] + ["value"]
    rows = (list(i) + [v] for i, v in zip(idx.tolist(), arr.ravel().tolist()))
    return write_table(path, header, rows)


def git_describe(cwd=None) -> str:
    """``git describe --always --dirty`` of the source tree, or ``"unknown"``."""
    cwd = cwd or os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=cwd, capture_output=True,
                             text=True, timeout=5, check=True)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_sidecar(path, config_hash: str, seed: int, **extra) -> Path:
    """JSON provenance next to an artifact: ``<path>.json``."""
    side = Path(str(path) + ".json") if Path(path).suffix != ".json" else Path(path)
    doc = {"config_hash": config_hash, "seed": int(seed), "git_describe": git_describe(), **extra}
    try:
        side.write_text(json.dumps(doc, indent=2, sort_keys=True, default=format_value) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {side}: {exc}") from exc
    return side
