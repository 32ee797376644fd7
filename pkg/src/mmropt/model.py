"""Pairwise problems, cost discretization, and marginal-solution containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grids import GridHierarchy

#: cap substituted for singular / overflowing cost values before solving
DEFAULT_COST_CAP = 1e6

# pair_cost(i, j, xi, xj) with xi (mi, d) and xj (mj, d) returns an
# (mi, mj) matrix of costs; +inf is allowed at coincident points.
PairCost = Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]

# region(i, coords) -> boolean mask of admissible points for particle i
RegionFilter = Callable[[int, np.ndarray], np.ndarray]


def _all_admissible(i: int, coords: np.ndarray) -> np.ndarray:
    return np.ones(len(coords), dtype=bool)


@dataclass
class PairwiseProblem:
    """N particles coupled by pairwise costs over a continuous box.

    ``symmetric`` marks problems where the cost is one shared symmetric
    function for every pair, enabling the permutation-invariant relaxation.
    """

    n_particles: int
    dim: int
    pair_cost: PairCost
    region: RegionFilter = _all_admissible
    symmetric: bool = False
    # optional predicate; pairs reported False carry zero cost and are
    # skipped when materializing objective blocks
    interacts: Callable[[int, int], bool] | None = None
    # optional problem-specific polish x -> (x', energy'); local refinement
    # calls it when plain descent cannot exploit the cost's structure
    local_polish: Callable[[np.ndarray], tuple[np.ndarray, float]] | None = None

    def energy(self, x: np.ndarray) -> float:
        """Total cost of a configuration, shape (N, dim)."""
        x = np.asarray(x, dtype=float).reshape(self.n_particles, self.dim)
        total = 0.0
        for i in range(self.n_particles):
            for j in range(i + 1, self.n_particles):
                total += float(self.pair_cost(i, j, x[i : i + 1], x[j : j + 1])[0, 0])
        return total


@dataclass
class DiscretizedCost:
    """Per-pair cost matrices on each particle's active point list."""

    points: dict[int, np.ndarray]
    blocks: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def sizes(self) -> dict[int, int]:
        return {i: len(p) for i, p in self.points.items()}


def discretize_pair(
    problem: PairwiseProblem,
    i: int,
    j: int,
    points_i: np.ndarray,
    points_j: np.ndarray,
    cap: float = DEFAULT_COST_CAP,
) -> np.ndarray:
    """Evaluate the (i, j) cost on a point-list product, capping singularities."""
    points_i = np.asarray(points_i, dtype=float)
    points_j = np.asarray(points_j, dtype=float)
    if len(points_i) == 0 or len(points_j) == 0:
        raise ValueError("point lists must be nonempty")
    block = np.asarray(problem.pair_cost(i, j, points_i, points_j), dtype=float)
    block = np.where(np.isfinite(block), block, cap)
    return np.minimum(block, cap)


def _part_averaging_matrix(h: GridHierarchy, level: int, parts: np.ndarray,
                           point_index: np.ndarray) -> np.ndarray:
    """Rows average uniformly over each part's points (ordered as point_index)."""
    owner = h.part_of_point(level, point_index)
    W = np.zeros((len(parts), len(point_index)))
    for a, part in enumerate(parts):
        mask = owner == part
        cnt = int(mask.sum())
        if cnt == 0:
            raise ValueError(f"part {part} has no points in the given block")
        W[a, mask] = 1.0 / cnt
    return W


def coarsen_block(
    block: np.ndarray,
    h: GridHierarchy,
    level: int,
    parts_i: np.ndarray,
    parts_j: np.ndarray,
) -> np.ndarray:
    """Weight-normalized within-part averages of a finest-point cost block.

    Rows/columns of ``block`` must be indexed by the sorted finest points of
    ``parts_i`` / ``parts_j`` (the order of ``GridHierarchy.points_in_parts``).
    """
    parts_i = np.asarray(parts_i, dtype=int)
    parts_j = np.asarray(parts_j, dtype=int)
    idx_i = h.points_in_parts(level, parts_i)
    idx_j = h.points_in_parts(level, parts_j)
    if block.shape != (len(idx_i), len(idx_j)):
        raise ValueError("block shape does not match the parts' point counts")
    Wi = _part_averaging_matrix(h, level, parts_i, idx_i)
    Wj = _part_averaging_matrix(h, level, parts_j, idx_j)
    return Wi @ block @ Wj.T


def part_sample_points(
    h: GridHierarchy, level: int, parts: np.ndarray, sample_depth: int
) -> tuple[np.ndarray, np.ndarray]:
    """Subsampled quadrature for within-part averages.

    Returns (coords, group) where coords stacks, for each part, the centers
    of its descendant parts ``sample_depth`` levels down (clamped to the
    finest level, where this is exact), and ``group[s]`` gives the owning
    position in ``parts``.
    """
    parts = np.asarray(parts, dtype=int)
    s_level = min(level + sample_depth, h.levels)
    per = (2 ** (s_level - level)) ** h.dim
    desc = parts
    for lvl in range(level, s_level):
        # children generated parent-by-parent to keep per-part grouping contiguous
        desc = np.concatenate([h.children_of(lvl, [p]) for p in desc])
    centers = h.part_centers(s_level)[desc]
    group = np.repeat(np.arange(len(parts)), per)
    return centers, group


def coarse_pair_cost(
    problem: PairwiseProblem,
    i: int,
    j: int,
    h: GridHierarchy,
    level: int,
    parts_i: np.ndarray,
    parts_j: np.ndarray,
    sample_depth: int = 2,
    cap: float = DEFAULT_COST_CAP,
) -> np.ndarray:
    """Coarse (i, j) cost on part sets via subsampled within-part averaging.

    Exact whenever ``level + sample_depth`` reaches the finest level; at
    coarser levels the average runs over a regular subsample of each part,
    which keeps the evaluation count bounded per part.
    """
    pts_i, grp_i = part_sample_points(h, level, np.asarray(parts_i, int), sample_depth)
    pts_j, grp_j = part_sample_points(h, level, np.asarray(parts_j, int), sample_depth)
    block = discretize_pair(problem, i, j, pts_i, pts_j, cap=cap)
    ni = grp_i[-1] + 1 if len(grp_i) else 0
    nj = grp_j[-1] + 1 if len(grp_j) else 0
    per_i = len(pts_i) // ni
    per_j = len(pts_j) // nj
    return block.reshape(ni, per_i, nj, per_j).mean(axis=(1, 3))


@dataclass
class MarginalSolution:
    """1- and 2-marginals returned by a relaxation solve.

    General programs fill ``mu``/``mu_pair``; symmetric (permutation
    invariant) programs fill the shared marginal ``rho`` and pair marginal
    ``gamma`` instead.
    """

    mu: list[np.ndarray]
    mu_pair: dict[tuple[int, int], np.ndarray]
    objective: float
    rho: np.ndarray | None = None
    gamma: np.ndarray | None = None
