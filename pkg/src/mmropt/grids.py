"""Nested multiscale partitions of axis-aligned boxes.

The hierarchy lives on a regular lattice of cell-center quadrature points.
Level 1 is the coarsest partition; at each subsequent level every part splits
into 2 children per axis (a 2x2 block in 2D), and at the finest level every
part is a single quadrature point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class NeighborhoodPolicy(Enum):
    """Grid-part adjacency: MOORE is 8-connected in 2D, NEUMANN 4-connected."""

    MOORE = "moore"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class GridHierarchy:
    """Nested partitions of a box in R^d (d in {1, 2}) with uniform weights.

    Part and point indices are row-major over the per-axis lattice at each
    level.  Level ``k`` (1-based) has ``base[a] * 2**(k-1)`` parts along axis
    ``a``; level ``levels`` is the finest, where parts coincide with points.
    """

    lo: np.ndarray
    hi: np.ndarray
    base: tuple[int, ...]
    levels: int
    _points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if lo.shape != hi.shape or lo.ndim != 1 or len(lo) not in (1, 2):
            raise ValueError("domain must be a box in R^1 or R^2")
        if np.any(hi <= lo):
            raise ValueError("degenerate box: hi must exceed lo on every axis")
        if len(self.base) != len(lo) or any(b < 2 for b in self.base):
            raise ValueError("base grid needs >= 2 cells per axis")
        object.__setattr__(self, "_points", self._centers(self.levels))

    # -- basic geometry -------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.lo)

    def level_shape(self, level: int) -> tuple[int, ...]:
        self._check_level(level)
        return tuple(b * 2 ** (level - 1) for b in self.base)

    def num_parts(self, level: int) -> int:
        return int(np.prod(self.level_shape(level)))

    def spacing(self, level: int) -> np.ndarray:
        """Cell width per axis at a level."""
        return (self.hi - self.lo) / np.array(self.level_shape(level))

    def _centers(self, level: int) -> np.ndarray:
        shape = self.level_shape(level)
        axes = [
            self.lo[a] + (np.arange(shape[a]) + 0.5) * (self.hi[a] - self.lo[a]) / shape[a]
            for a in range(self.dim)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def part_centers(self, level: int) -> np.ndarray:
        """(M^(k), d) array of part centroids at a level."""
        return self._centers(level)

    @property
    def points(self) -> np.ndarray:
        """Finest-level quadrature points, shape (M, d)."""
        return self._points

    @property
    def num_points(self) -> int:
        return len(self._points)

    @property
    def weights(self) -> np.ndarray:
        """Uniform quadrature weights, one per finest point."""
        return np.ones(self.num_points)

    # -- index bookkeeping ----------------------------------------------

    def _check_level(self, level: int) -> None:
        if not 1 <= level <= self.levels:
            raise ValueError(f"level {level} outside 1..{self.levels}")

    def _check_parts(self, level: int, parts: np.ndarray) -> np.ndarray:
        parts = np.asarray(parts, dtype=int)
        if parts.size and (parts.min() < 0 or parts.max() >= self.num_parts(level)):
            raise IndexError(f"part index out of range at level {level}")
        return parts

    def _coords(self, level: int, parts: np.ndarray) -> np.ndarray:
        return np.stack(np.unravel_index(parts, self.level_shape(level)), axis=-1)

    def _flat(self, level: int, coords: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(coords.T), self.level_shape(level))

    def parent_of(self, level: int, parts) -> np.ndarray:
        """Parts at ``level - 1`` containing the given level-``level`` parts."""
        self._check_level(level)
        if level == 1:
            raise ValueError("level-1 parts have no parent")
        parts = self._check_parts(level, parts)
        return np.unique(self._flat(level - 1, self._coords(level, parts) // 2))

    def children_of(self, level: int, parts) -> np.ndarray:
        """Parts at ``level + 1`` whose parent lies in ``parts``."""
        self._check_level(level)
        if level >= self.levels:
            raise ValueError("no level below the finest")
        parts = self._check_parts(level, parts)
        if parts.size == 0:
            return np.array([], dtype=int)
        coords = self._coords(level, parts)
        offsets = np.stack(
            np.meshgrid(*([np.arange(2)] * self.dim), indexing="ij"), axis=-1
        ).reshape(-1, self.dim)
        child = (2 * coords[:, None, :] + offsets[None, :, :]).reshape(-1, self.dim)
        return np.unique(self._flat(level + 1, child))

    def points_in_parts(self, level: int, parts) -> np.ndarray:
        """Sorted finest-point indices covered by the given parts."""
        self._check_level(level)
        parts = self._check_parts(level, parts)
        if parts.size == 0:
            return np.array([], dtype=int)
        f = 2 ** (self.levels - level)
        coords = self._coords(level, parts)
        offs = np.stack(
            np.meshgrid(*([np.arange(f)] * self.dim), indexing="ij"), axis=-1
        ).reshape(-1, self.dim)
        pts = (f * coords[:, None, :] + offs[None, :, :]).reshape(-1, self.dim)
        return np.sort(self._flat(self.levels, pts))

    def part_of_point(self, level: int, point_indices) -> np.ndarray:
        """Level-``level`` part index containing each finest point."""
        self._check_level(level)
        idx = np.asarray(point_indices, dtype=int)
        f = 2 ** (self.levels - level)
        coords = self._coords(self.levels, idx)
        return self._flat(level, coords // f)

    def adjacent_parts(self, level: int, parts, policy: NeighborhoodPolicy) -> np.ndarray:
        """Adjacency closure of a part set (the parts plus their neighbors)."""
        self._check_level(level)
        parts = self._check_parts(level, parts)
        if parts.size == 0:
            return np.array([], dtype=int)
        shape = self.level_shape(level)
        coords = self._coords(level, parts)
        deltas = np.stack(
            np.meshgrid(*([np.array([-1, 0, 1])] * self.dim), indexing="ij"), axis=-1
        ).reshape(-1, self.dim)
        if policy is NeighborhoodPolicy.NEUMANN:
            deltas = deltas[np.abs(deltas).sum(axis=1) <= 1]
        cand = (coords[:, None, :] + deltas[None, :, :]).reshape(-1, self.dim)
        ok = np.all((cand >= 0) & (cand < np.array(shape)), axis=1)
        return np.unique(self._flat(level, cand[ok]))


def build_regular_hierarchy(lo, hi, base: tuple[int, ...] | int, levels: int) -> GridHierarchy:
    """Build a hierarchy over the box [lo, hi] with the given level-1 grid.

    The finest level has ``base * 2**(levels-1)`` cells per axis; coarsening
    merges 2 children per parent per axis.
    """
    if isinstance(base, int):
        base = (base,) * len(np.atleast_1d(np.asarray(lo, dtype=float)))
    return GridHierarchy(lo=np.asarray(lo, float), hi=np.asarray(hi, float),
                         base=tuple(base), levels=levels)


def neighborhood(h: GridHierarchy, level: int, parts, policy: NeighborhoodPolicy) -> np.ndarray:
    """Finest-point indices covered by the parts and their adjacent parts."""
    return h.points_in_parts(level, h.adjacent_parts(level, parts, policy))
