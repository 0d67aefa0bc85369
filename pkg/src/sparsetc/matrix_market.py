"""Matrix Market exchange format for order-2 tensors.

Supports the coordinate layout with real or integer fields. Indices are
1-based on disk and 0-based in memory. Symmetric-tagged inputs are expanded
to general on read; the writer always emits general files with entries in
row-major sorted order.
"""

from __future__ import annotations

import numpy as np

from .formats import TensorFormat, coo
from .tensor import Tensor, build_from_entries, stored_entries


class MatrixMarketError(ValueError):
    """Malformed or unsupported Matrix Market content."""


def read_matrix_market(path, fmt: TensorFormat | None = None, name: str = "A") -> Tensor:
    """Read a coordinate-format Matrix Market file into a tensor.

    The storage format defaults to COO; pass ``fmt`` to build a different
    layout directly. Duplicate entries are summed.
    """
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket":
            raise MatrixMarketError(f"bad Matrix Market header: {header.strip()!r}")
        _, obj, layout, field, symmetry = (p.lower() for p in parts)
        if obj != "matrix" or layout != "coordinate":
            raise MatrixMarketError(f"unsupported Matrix Market object/layout: {obj}/{layout}")
        if field not in ("real", "integer"):
            raise MatrixMarketError(f"unsupported Matrix Market field: {field}")
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(f"unsupported Matrix Market symmetry: {symmetry}")

        line = fh.readline()
        while line and line.lstrip().startswith("%"):
            line = fh.readline()
        dims = line.split()
        if len(dims) != 3:
            raise MatrixMarketError(f"bad size line: {line.strip()!r}")
        rows, cols, count = (int(x) for x in dims)

        entries = []
        for _ in range(count):
            raw = fh.readline()
            if not raw:
                raise MatrixMarketError("file ends before all entries were read")
            fields = raw.split()
            if len(fields) != 3:
                raise MatrixMarketError(f"bad entry line: {raw.strip()!r}")
            i, j = int(fields[0]) - 1, int(fields[1]) - 1
            v = float(fields[2])
            if not (0 <= i < rows and 0 <= j < cols):
                raise MatrixMarketError(f"entry ({i + 1}, {j + 1}) outside {rows}x{cols}")
            entries.append(((i, j), v))
            if symmetry == "symmetric" and i != j:
                entries.append(((j, i), v))

    if fmt is None:
        fmt = coo(rows, cols)
    elif fmt.shape != (rows, cols):
        raise MatrixMarketError(f"format shape {fmt.shape} != file shape {(rows, cols)}")
    return build_from_entries((rows, cols), fmt, entries, name=name)


def write_matrix_market(path, t: Tensor) -> None:
    """Write an order-2 tensor as a general real coordinate file."""
    if t.order != 2:
        raise MatrixMarketError(f"Matrix Market writer handles order-2 tensors, got order {t.order}")
    coords, vals = stored_entries(t)
    if len(vals):
        order = np.lexsort((coords[:, 1], coords[:, 0]))
        coords, vals = coords[order], vals[order]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{t.shape[0]} {t.shape[1]} {len(vals)}\n")
        for (i, j), v in zip(coords, vals):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
