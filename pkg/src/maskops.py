"""
Binary masks and their boundary partition.

Key conventions:
- The boundary is the INNER boundary under 4-connectivity: a foreground pixel
  with at least one background 4-neighbour. It is a subset of the foreground.
- Off-grid pixels count as background, so foreground touching the image edge
  is boundary.
- Boundary points are kept in row-major order; heatmap composition and tests
  rely on that order.
"""

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DimMismatch

logger = logging.getLogger(__name__)

Pixel = tuple[int, int]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A 2-D boolean grid. True is foreground."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise DimMismatch(f"Mask must be 2-D, got shape {cells.shape}")
        if cells.shape[0] < 1 or cells.shape[1] < 1:
            raise DimMismatch(f"Mask dims must be >= 1, got {cells.shape}")
        cells = cells.astype(bool, copy=True)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_pixels(cls, height: int, width: int, pixels: Iterable[Pixel]) -> "BinaryMask":
        cells = np.zeros((height, width), dtype=bool)
        for row, col in pixels:
            cells[row, col] = True
        return cls(cells)

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    @property
    def dims(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def area(self) -> int:
        return int(self.cells.sum())

    def has_foreground(self) -> bool:
        return bool(self.cells.any())

    def complement(self) -> "BinaryMask":
        return BinaryMask(~self.cells)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.cells, other.cells))

    def __repr__(self) -> str:
        return f"BinaryMask({self.height}x{self.width}, area={self.area})"


@dataclass(frozen=True)
class BoundarySet:
    """Boundary pixels of a mask, row-major and duplicate-free."""

    points: tuple[Pixel, ...]
    dims: tuple[int, int]

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def is_empty(self) -> bool:
        return not self.points

    def to_mask(self) -> BinaryMask:
        return BinaryMask.from_pixels(self.dims[0], self.dims[1], self.points)


def boundary_cells(cells: np.ndarray) -> np.ndarray:
    """Boolean grid of inner 4-connected boundary pixels."""
    padded = np.pad(cells.astype(bool), 1, mode="constant", constant_values=False)
    up = padded[:-2, 1:-1]
    down = padded[2:, 1:-1]
    left = padded[1:-1, :-2]
    right = padded[1:-1, 2:]
    return cells & ~(up & down & left & right)


def extract_boundary(mask: BinaryMask) -> BoundarySet:
    """Foreground pixels with at least one background (or off-grid) 4-neighbour."""
    rows, cols = np.nonzero(boundary_cells(mask.cells))
    # np.nonzero already walks row-major
    points = tuple((int(r), int(c)) for r, c in zip(rows, cols))
    return BoundarySet(points=points, dims=mask.dims)


@dataclass(frozen=True)
class Partition:
    """Disjoint interior / boundary / exterior split of every pixel."""

    interior: frozenset[Pixel]
    boundary: BoundarySet
    exterior: frozenset[Pixel]


def partition_cells(mask: BinaryMask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of partition(): (interior, boundary, exterior) boolean grids."""
    boundary = boundary_cells(mask.cells)
    interior = mask.cells & ~boundary
    exterior = ~mask.cells
    return interior, boundary, exterior


def partition(mask: BinaryMask) -> Partition:
    interior, _, exterior = partition_cells(mask)
    return Partition(
        interior=frozenset((int(r), int(c)) for r, c in zip(*np.nonzero(interior))),
        boundary=extract_boundary(mask),
        exterior=frozenset((int(r), int(c)) for r, c in zip(*np.nonzero(exterior))),
    )
