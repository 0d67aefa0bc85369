"""Per-dimension storage formats and whole-tensor format descriptors.

A tensor format is a mode ordering (a permutation of the logical dimensions)
plus one level format per dimension, listed in storage (mode) order. The
classic matrix formats fall out as compositions:

    CSR   = identity ordering, [dense, compressed]
    CSC   = swapped ordering,  [dense, compressed]
    DCSR  = identity ordering, [compressed, compressed]
    COO   = identity ordering, [coordinate, coordinate]
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class LevelFormat(enum.Enum):
    """Storage scheme for a single tensor dimension."""

    DENSE = "dense"
    COMPRESSED = "compressed"
    COORDINATE = "coordinate"

    @property
    def is_sparse(self) -> bool:
        return self is not LevelFormat.DENSE


@dataclass(frozen=True)
class TensorFormat:
    """Shape, mode ordering, and per-level storage of a tensor.

    ``shape`` is in logical dimension order. ``mode_ordering[k]`` gives the
    logical dimension stored at level ``k``, so ``levels[k]`` describes
    dimension ``mode_ordering[k]``.
    """

    shape: tuple[int, ...]
    mode_ordering: tuple[int, ...]
    levels: tuple[LevelFormat, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "mode_ordering", tuple(int(m) for m in self.mode_ordering))
        object.__setattr__(self, "levels", tuple(self.levels))
        n = len(self.shape)
        if any(s <= 0 for s in self.shape):
            raise ValueError(f"dimension extents must be positive, got {self.shape}")
        if len(self.levels) != n or len(self.mode_ordering) != n:
            raise ValueError(
                f"format arity mismatch: shape {self.shape}, "
                f"{len(self.levels)} levels, mode ordering {self.mode_ordering}"
            )
        if sorted(self.mode_ordering) != list(range(n)):
            raise ValueError(f"mode ordering {self.mode_ordering} is not a permutation")
        kinds = set(self.levels)
        if LevelFormat.COORDINATE in kinds and kinds != {LevelFormat.COORDINATE}:
            # Coordinate levels are an aligned tuple table; mixing them with
            # positional (dense/compressed) levels is rejected outright.
            raise ValueError("coordinate levels cannot be mixed with dense or compressed levels")

    @property
    def order(self) -> int:
        return len(self.shape)

    def level_extent(self, level: int) -> int:
        """Extent of the dimension stored at storage level ``level``."""
        return self.shape[self.mode_ordering[level]]

    def level_of_dim(self, dim: int) -> int:
        """Storage level holding logical dimension ``dim``."""
        return self.mode_ordering.index(dim)

    def dim_is_sparse(self, dim: int) -> bool:
        return self.levels[self.level_of_dim(dim)].is_sparse

    @property
    def has_sparse_levels(self) -> bool:
        return any(lv.is_sparse for lv in self.levels)

    def with_mode_ordering(self, mode_ordering) -> "TensorFormat":
        """Same per-dimension level kinds under a different mode ordering."""
        mode_ordering = tuple(int(m) for m in mode_ordering)
        kind_of_dim = {self.mode_ordering[k]: self.levels[k] for k in range(self.order)}
        return TensorFormat(self.shape, mode_ordering, tuple(kind_of_dim[d] for d in mode_ordering))

    def name(self) -> str:
        """Conventional name of this format if it has one, else a spelled-out description."""
        if self.order == 2:
            key = (self.mode_ordering, self.levels)
            named = {
                ((0, 1), (LevelFormat.DENSE, LevelFormat.DENSE)): "dense",
                ((0, 1), (LevelFormat.DENSE, LevelFormat.COMPRESSED)): "csr",
                ((1, 0), (LevelFormat.DENSE, LevelFormat.COMPRESSED)): "csc",
                ((0, 1), (LevelFormat.COMPRESSED, LevelFormat.COMPRESSED)): "dcsr",
                ((0, 1), (LevelFormat.COORDINATE, LevelFormat.COORDINATE)): "coo",
            }
            if key in named:
                return named[key]
        if all(lv is LevelFormat.DENSE for lv in self.levels) and self.mode_ordering == tuple(
            range(self.order)
        ):
            return "dense"
        lv = ",".join(l.value for l in self.levels)
        return f"(modes={self.mode_ordering}; levels=[{lv}])"


def dense_format(shape) -> TensorFormat:
    shape = tuple(shape)
    return TensorFormat(shape, tuple(range(len(shape))), (LevelFormat.DENSE,) * len(shape))


def csr(nrows: int, ncols: int) -> TensorFormat:
    return TensorFormat((nrows, ncols), (0, 1), (LevelFormat.DENSE, LevelFormat.COMPRESSED))


def csc(nrows: int, ncols: int) -> TensorFormat:
    return TensorFormat((nrows, ncols), (1, 0), (LevelFormat.DENSE, LevelFormat.COMPRESSED))


def dcsr(nrows: int, ncols: int) -> TensorFormat:
    return TensorFormat((nrows, ncols), (0, 1), (LevelFormat.COMPRESSED, LevelFormat.COMPRESSED))


def coo(*shape: int) -> TensorFormat:
    shape = tuple(shape)
    return TensorFormat(shape, tuple(range(len(shape))), (LevelFormat.COORDINATE,) * len(shape))


_BY_NAME = {"dense": dense_format, "csr": csr, "csc": csc, "dcsr": dcsr, "coo": coo}


def format_by_name(name: str, shape) -> TensorFormat:
    """Construct a format from a conventional name (csr, csc, dcsr, coo, dense)."""
    shape = tuple(shape)
    key = name.strip().lower()
    if key not in _BY_NAME:
        raise ValueError(f"unknown format name {name!r}; expected one of {sorted(_BY_NAME)}")
    if key == "dense":
        return dense_format(shape)
    if key == "coo":
        return coo(*shape)
    if len(shape) != 2:
        raise ValueError(f"format {name!r} is a matrix format; got shape {shape}")
    return _BY_NAME[key](*shape)
