"""Grid function persistence: flat CSV and a compact little-endian binary dump.

Binary layout::

    int64   dim
    float64 extents[dim]
    int64   n_cells[dim]
    float64 values[prod(n_cells)]    # C order, first axis slowest

All fields little-endian.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .grid import Grid, GridFunction


def to_binary(u: GridFunction) -> bytes:
    g = u.grid
    buf = io.BytesIO()
    buf.write(np.asarray([g.dim], dtype="<i8").tobytes())
    buf.write(np.asarray(g.extents, dtype="<f8").tobytes())
    buf.write(np.asarray(g.n_cells, dtype="<i8").tobytes())
    buf.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    return buf.getvalue()


def from_binary(data: bytes) -> GridFunction:
    dim = int(np.frombuffer(data, dtype="<i8", count=1)[0])
    if dim not in (1, 2):
        raise ValueError(f"bad dimension {dim} in binary header")
    off = 8
    extents = np.frombuffer(data, dtype="<f8", count=dim, offset=off)
    off += 8 * dim
    n_cells = np.frombuffer(data, dtype="<i8", count=dim, offset=off)
    off += 8 * dim
    grid = Grid(tuple(extents.tolist()), tuple(int(n) for n in n_cells))
    if len(data) - off != 8 * grid.size:
        raise ValueError("binary payload length does not match header")
    values = np.frombuffer(data, dtype="<f8", count=grid.size, offset=off)
    return GridFunction(grid, values.reshape(grid.shape))


def write_binary(u: GridFunction, path: str | Path) -> None:
    Path(path).write_bytes(to_binary(u))


def read_binary(path: str | Path) -> GridFunction:
    return from_binary(Path(path).read_bytes())


def write_csv(u: GridFunction, path: str | Path) -> None:
    """One row per interior node: flat index, coordinates, value."""
    grid = u.grid
    coords = [c.ravel() for c in grid.coordinates()]
    names = ["x", "y"][: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", *names, "value"])
        for i, val in enumerate(u.values.ravel()):
            w.writerow([i, *(repr(float(c[i])) for c in coords), repr(float(val))])


def read_csv(path: str | Path, grid: Grid) -> GridFunction:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != grid.size:
        raise ValueError(f"expected {grid.size} rows, found {len(rows)}")
    values = np.empty(grid.size)
    for row in rows:
        values[int(row["index"])] = float(row["value"])
    return GridFunction(grid, values.reshape(grid.shape))
