"""CSV + JSON-sidecar serialization for fields and masks.

The on-disk contract consumed by external tools (including the plotting
scripts): a CSV with header ``i,j[,k],x,y[,z],value`` listing every grid node
in C order, and a sidecar ``<stem>.json`` carrying the grid metadata and the
role of the data. Masks are written as fields with values in {0, 1}; absent
nodes of a field are written as ``nan``. Floats use shortest round-trip
formatting, so write/read/write is byte-stable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import Grid, Mask, ScalarField

SCHEMA_VERSION = 1

_INDEX_COLS = ("i", "j", "k")
_COORD_COLS = ("x", "y", "z")


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e16 and np.isfinite(x):
        return str(int(x))
    return repr(float(x))


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def write_field(path, grid: Grid, values: np.ndarray, role: str, kind: str = "field",
                extra: dict | None = None) -> None:
    """Write nodal values (shape = grid.shape) with their JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = grid.dim
    header = ",".join(_INDEX_COLS[:dim] + _COORD_COLS[:dim] + ("value",))
    idx = np.indices(grid.shape).reshape(dim, -1).T
    pos = grid.positions().reshape(-1, dim)
    vals = np.asarray(values, dtype=float).reshape(-1)
    lines = [header]
    for row, p, v in zip(idx, pos, vals):
        cells = [str(int(c)) for c in row] + [_fmt(c) for c in p] + [
            "nan" if np.isnan(v) else _fmt(v)
        ]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")

    meta = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "role": role,
        "origin": list(grid.origin),
        "spacing": grid.spacing,
        "shape": list(grid.shape),
    }
    if extra:
        meta.update(extra)
    _sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_mask(path, mask: Mask, role: str, extra: dict | None = None) -> None:
    write_field(path, mask.grid, mask.values.astype(float), role, kind="mask", extra=extra)


def write_scalar_field(path, f: ScalarField, role: str, extra: dict | None = None) -> None:
    write_field(path, f.grid, f.values, role, kind="field", extra=extra)


def read_field(path) -> tuple[Grid, np.ndarray, dict]:
    """Read a field CSV plus sidecar; returns (grid, values, metadata)."""
    path = Path(path)
    meta = json.loads(_sidecar_path(path).read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(
            f"schema version mismatch in {path}: "
            f"{meta.get('schema_version')} != {SCHEMA_VERSION}"
        )
    grid = Grid(tuple(meta["origin"]), float(meta["spacing"]), tuple(meta["shape"]))
    raw = np.genfromtxt(path, delimiter=",", skip_header=1)
    if raw.ndim == 1:
        raw = raw.reshape(1, -1)
    if raw.shape[0] != grid.node_count:
        raise ValueError(f"{path}: expected {grid.node_count} rows, got {raw.shape[0]}")
    values = raw[:, -1].reshape(grid.shape)
    return grid, values, meta


def read_mask(path) -> tuple[Mask, dict]:
    grid, values, meta = read_field(path)
    return Mask(grid, values > 0.5), meta


def read_scalar_field(path) -> tuple[ScalarField, dict]:
    grid, values, meta = read_field(path)
    return ScalarField.from_values(grid, values), meta


def slice_filename(index: int) -> str:
    return f"t_{index:04d}.csv"


def write_time_slices(directory, grid: Grid, times, slices, role: str) -> None:
    """Write a stack of time slices as t_####.csv files plus a times.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for m, (t, vals) in enumerate(zip(times, slices)):
        write_field(directory / slice_filename(m), grid, vals, role,
                    extra={"time": float(t), "index": m})
    (directory / "times.json").write_text(
        json.dumps({"times": [float(t) for t in times]}, sort_keys=True) + "\n"
    )


def read_time_slices(directory) -> tuple[Grid, np.ndarray, np.ndarray]:
    """Read a slice directory; returns (grid, times, values[M+1, *shape])."""
    directory = Path(directory)
    times = json.loads((directory / "times.json").read_text())["times"]
    grids, stacks = [], []
    for m in range(len(times)):
        grid, vals, _ = read_field(directory / slice_filename(m))
        grids.append(grid)
        stacks.append(vals)
    if not grids:
        raise ValueError(f"no slices found in {directory}")
    return grids[0], np.asarray(times, dtype=float), np.stack(stacks)
