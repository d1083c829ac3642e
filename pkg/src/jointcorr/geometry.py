"""Flat-index / 2D-cell arithmetic on feature grids.

Flat indices are zero-based and row-major: ``i = row * w + col``.
Displacements are integer ``(dy, dx)`` offsets measured in grid cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Returned by displacement lookups that leave the grid.
OUT_OF_GRID = -1


@dataclass(frozen=True)
class GridShape:
    h: int
    w: int

    def __post_init__(self):
        if int(self.h) != self.h or int(self.w) != self.w:
            raise ValueError(f"grid dims must be integers, got {self.h}x{self.w}")
        if self.h < 1 or self.w < 1:
            raise ValueError(f"grid dims must be positive, got {self.h}x{self.w}")

    @property
    def size(self) -> int:
        return self.h * self.w

    def __str__(self):
        return f"{self.h}x{self.w}"


class Displacement(NamedTuple):
    dy: int
    dx: int

    def __neg__(self):
        return Displacement(-self.dy, -self.dx)


def flat_to_coord(i: int, shape: GridShape) -> tuple[int, int]:
    if not 0 <= i < shape.size:
        raise IndexError(f"index out of grid: {i} not in [0, {shape.size})")
    return divmod(int(i), shape.w)


def coord_to_flat(coord: tuple[int, int], shape: GridShape) -> int:
    row, col = coord
    if not (0 <= row < shape.h and 0 <= col < shape.w):
        raise IndexError(f"coordinate out of grid: {coord} on {shape}")
    return int(row) * shape.w + int(col)


def apply_displacement(i: int, d: tuple[int, int], shape: GridShape,
                       to_shape: GridShape | None = None) -> int:
    """Flat index of cell ``i`` moved by ``d``, or ``OUT_OF_GRID``.

    ``to_shape`` is the grid the moved cell lives on (defaults to ``shape``);
    source and target grids of a cost volume need not agree.
    """
    row, col = flat_to_coord(i, shape)
    to_shape = shape if to_shape is None else to_shape
    r, c = row + d[0], col + d[1]
    if 0 <= r < to_shape.h and 0 <= c < to_shape.w:
        return r * to_shape.w + c
    return OUT_OF_GRID


def grid_coords(shape: GridShape) -> np.ndarray:
    """(h*w, 2) integer array of (row, col) for every flat index."""
    rows, cols = np.divmod(np.arange(shape.size), shape.w)
    return np.stack([rows, cols], axis=1)


def apply_displacements(vectors: np.ndarray, shape: GridShape,
                        to_shape: GridShape | None = None) -> np.ndarray:
    """Vectorised :func:`apply_displacement` for one displacement per cell."""
    to_shape = shape if to_shape is None else to_shape
    dest = grid_coords(shape) + np.asarray(vectors, dtype=np.int64)
    inside = ((dest[:, 0] >= 0) & (dest[:, 0] < to_shape.h)
              & (dest[:, 1] >= 0) & (dest[:, 1] < to_shape.w))
    flat = dest[:, 0] * to_shape.w + dest[:, 1]
    return np.where(inside, flat, OUT_OF_GRID)
