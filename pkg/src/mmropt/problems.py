"""Problem generators: sensor network localization and Lennard-Jones clusters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import GridHierarchy
from .model import PairwiseProblem


# -- sensor network localization -----------------------------------------


@dataclass
class SnlInstance:
    """Corrupted pairwise-distance observations for N planar sensors.

    Observations exist only for pairs whose true distance is within the
    sensing radius; an observed distance is bumped by a Unif[0, 3] draw with
    probability ``sigma``.
    """

    truth: np.ndarray
    D: np.ndarray
    mask: np.ndarray
    sigma: float
    d_max: float
    anchors: np.ndarray
    seed: int


def generate_snl(
    n: int,
    lo,
    hi,
    sigma: float,
    d_max: float,
    n_anchors: int,
    seed: int,
) -> SnlInstance:
    """Sample ground truth uniformly in the box and corrupt its distances."""
    if not 0 <= n_anchors <= n:
        raise ValueError("need 0 <= n_anchors <= n")
    rng = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    truth = lo + rng.random((n, len(lo))) * (hi - lo)
    diff = truth[:, None, :] - truth[None, :, :]
    D0 = np.sqrt((diff**2).sum(axis=-1))
    iu = np.triu_indices(n, k=1)
    corrupt = rng.random(len(iu[0])) < sigma
    bump = rng.uniform(0.0, 3.0, len(iu[0])) * corrupt
    D = D0.copy()
    D[iu] += bump
    D.T[iu] = D[iu]
    mask = (D0 <= d_max) & ~np.eye(n, dtype=bool)
    D = np.where(mask, D, 0.0)
    return SnlInstance(
        truth=truth, D=D, mask=mask, sigma=sigma, d_max=d_max,
        anchors=np.arange(n_anchors), seed=seed,
    )


def snl_cost(inst: SnlInstance, i: int, j: int, x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
    """|dist - D(i,j)|^(1/2) on observed pairs; identically 0 otherwise."""
    x_i = np.atleast_2d(x_i)
    x_j = np.atleast_2d(x_j)
    if i == j or not inst.mask[i, j]:
        return np.zeros((len(x_i), len(x_j)))
    diff = x_i[:, None, :] - x_j[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    return np.sqrt(np.abs(dist - inst.D[i, j]))


def snl_problem(inst: SnlInstance) -> PairwiseProblem:
    n = len(inst.truth)
    return PairwiseProblem(
        n_particles=n,
        dim=inst.truth.shape[1],
        pair_cost=lambda i, j, xi, xj: snl_cost(inst, i, j, xi, xj),
        interacts=lambda i, j: bool(inst.mask[i, j]),
        # square-root kinks defeat descent; reweighted Gauss-Newton does not
        local_polish=lambda x: snl_refine(inst, x),
    )


def snl_regions(inst: SnlInstance, h: GridHierarchy) -> dict[int, np.ndarray]:
    """Admissible finest-point masks; anchors get singletons at their nearest grid point."""
    pts = h.points
    regions: dict[int, np.ndarray] = {}
    for i in inst.anchors:
        pos = inst.truth[i]
        if np.any(pos < h.lo) or np.any(pos > h.hi):
            raise ValueError(f"anchor {i} lies outside the domain")
        nearest = int(np.argmin(((pts - pos) ** 2).sum(axis=1)))
        mask = np.zeros(len(pts), dtype=bool)
        mask[nearest] = True
        regions[int(i)] = mask
    return regions


def snl_refine(
    inst: SnlInstance,
    start: np.ndarray,
    max_outer: int = 60,
    eps0: float = 1e-1,
    eps_min: float = 1e-14,
    restarts: int = 8,
    jitter: float = 0.05,
) -> tuple[np.ndarray, float]:
    """Iteratively reweighted Gauss-Newton polish of a near-solution.

    Minimizes sum_e |dist_e - D_e|^(1/2) over non-anchor positions by
    majorizing each term with a quadratic of weight 1/(4 (|r|+eps)^(3/2))
    and taking a damped Gauss-Newton step; eps is shrunk geometrically.
    Consistent observations acquire dominant weight while corrupted ones
    fade, so in the correct basin the consistent subgraph is solved to
    machine precision.  Starts that sit exactly on kinks (e.g. every
    particle on a grid point) can trap the reweighting, so a few
    deterministically jittered restarts are tried and the best result
    kept.  Returns the refined positions and objective.
    """
    start = np.asarray(start, dtype=float)
    free_rows = np.setdiff1d(np.arange(len(start)), inst.anchors)
    best_x, best_f = _snl_refine_once(inst, start, max_outer, eps0, eps_min)
    for k in range(restarts):
        rng = np.random.default_rng(k)
        s = start.copy()
        s[free_rows] += rng.normal(0.0, jitter, (len(free_rows), start.shape[1]))
        x, f = _snl_refine_once(inst, s, max_outer, eps0, eps_min)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, float(best_f)


def _snl_refine_once(
    inst: SnlInstance,
    start: np.ndarray,
    max_outer: int,
    eps0: float,
    eps_min: float,
) -> tuple[np.ndarray, float]:
    x = np.asarray(start, dtype=float).copy()
    # anchor positions are known exactly; discretized starts may carry them
    # snapped to grid points
    x[inst.anchors] = inst.truth[inst.anchors]
    n, d = x.shape
    free = np.setdiff1d(np.arange(n), inst.anchors)
    edges = [(i, j) for i, j in zip(*np.triu_indices(n, k=1)) if inst.mask[i, j]]
    if not len(free) or not edges:
        return x, _snl_total(inst, x, edges)
    col = {int(i): k for k, i in enumerate(free)}
    nv = len(free) * d

    def residuals(y):
        diff = np.array([y[i] - y[j] for i, j in edges])
        dist = np.sqrt((diff**2).sum(axis=1))
        D = np.array([inst.D[i, j] for i, j in edges])
        return dist - D, diff, dist

    fx = _snl_total(inst, x, edges)
    lam = 1e-10
    for _ in range(3):  # annealing restarts to escape shallow kinks
        x, fx, moved = _irls_round(inst, x, fx, free, col, edges, d, nv,
                                   residuals, max_outer, eps0, eps_min, lam)
        if not moved:
            break
    return x, float(fx)


def _irls_round(inst, x, fx, free, col, edges, d, nv, residuals,
                max_outer, eps0, eps_min, lam):
    f_start = fx
    eps = eps0
    for _ in range(max_outer):
        r, diff, dist = residuals(x)
        w = 1.0 / (4.0 * (np.abs(r) + eps) ** 1.5)
        J = np.zeros((len(edges), nv))
        for e, (i, j) in enumerate(edges):
            if dist[e] == 0.0:
                continue
            u = diff[e] / dist[e]
            if i in col:
                J[e, col[i] * d : col[i] * d + d] = u
            if j in col:
                J[e, col[j] * d : col[j] * d + d] = -u
        JW = J * w[:, None]
        H = J.T @ JW + lam * np.eye(nv)
        g = JW.T @ r
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        accepted = False
        scale = 1.0
        for _ in range(40):
            cand = x.copy()
            cand[free] -= scale * step.reshape(len(free), d)
            fc = _snl_total(inst, cand, edges)
            if fc < fx:
                x, fx, accepted = cand, fc, True
                break
            scale *= 0.5
        eps = max(eps * 0.3, eps_min)
        if not accepted and eps == eps_min:
            break
    return x, fx, fx < f_start - 1e-15 * (1 + abs(f_start))


def _snl_total(inst: SnlInstance, y: np.ndarray, edges) -> float:
    total = 0.0
    for i, j in edges:
        dist = float(np.linalg.norm(y[i] - y[j]))
        total += math.sqrt(abs(dist - inst.D[i, j]))
    return total


def position_error(recovered: np.ndarray, truth: np.ndarray, anchors=()) -> float:
    """Mean per-particle 2-norm error over non-anchor particles."""
    recovered = np.asarray(recovered, dtype=float)
    free = np.setdiff1d(np.arange(len(truth)), np.asarray(anchors, dtype=int))
    err = np.sqrt(((recovered[free] - truth[free]) ** 2).sum(axis=1))
    return float(err.mean()) if len(free) else 0.0


def success_rate(recovered: np.ndarray, truth: np.ndarray, grid_spacing: float) -> float:
    """Fraction of particles with every coordinate within one grid spacing."""
    recovered = np.asarray(recovered, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recovered.shape != truth.shape:
        raise ValueError("configurations must have the same shape")
    ok = np.all(np.abs(recovered - truth) < grid_spacing, axis=1)
    return float(ok.mean())


# -- Lennard-Jones clusters ----------------------------------------------


@dataclass
class LjInstance:
    """Planar cluster with pairwise 12-6 potential; per-pair optimal distances r."""

    n_particles: int
    epsilon: float
    r: np.ndarray  # (N, N), symmetric, positive
    symmetric: bool
    seed: int | None = None


def generate_lj_symmetric(n: int, r: float = 1.0, epsilon: float = 1.0) -> LjInstance:
    return LjInstance(
        n_particles=n, epsilon=epsilon, r=np.full((n, n), float(r)),
        symmetric=True,
    )


def generate_lj_asymmetric(n: int, seed: int, epsilon: float = 1.0) -> LjInstance:
    """Independent pair distances r_ij ~ Unif(0.5, 1.5)."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    r = np.ones((n, n))
    r[iu] = rng.uniform(0.5, 1.5, len(iu[0]))
    r.T[iu] = r[iu]
    return LjInstance(n_particles=n, epsilon=epsilon, r=r, symmetric=False, seed=seed)


def lj_cost(inst: LjInstance, i: int, j: int, x_i: np.ndarray, x_j: np.ndarray) -> np.ndarray:
    """eps * [(r/d)^12 - 2 (r/d)^6]; +inf at coincident points."""
    x_i = np.atleast_2d(x_i)
    x_j = np.atleast_2d(x_j)
    diff = x_i[:, None, :] - x_j[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (inst.r[i, j] / dist) ** 6
        val = inst.epsilon * (s * s - 2.0 * s)
    return np.where(dist > 0.0, val, np.inf)


def lj_problem(inst: LjInstance, dim: int = 2) -> PairwiseProblem:
    return PairwiseProblem(
        n_particles=inst.n_particles,
        dim=dim,
        pair_cost=lambda i, j, xi, xj: lj_cost(inst, i, j, xi, xj),
        symmetric=inst.symmetric,
    )


def lj_anchor_triangle(h: GridHierarchy) -> np.ndarray:
    """Finest-point indices nearest the centered equilateral-triangle anchors."""
    center = (h.lo + h.hi) / 2.0
    off = math.sqrt(3.0) / 4.0
    targets = np.array(
        [
            [center[0] - 0.5, center[1] - off],
            [center[0] + 0.5, center[1] - off],
            [center[0], center[1] + off],
        ]
    )
    pts = h.points
    return np.array(
        [int(np.argmin(((pts - t) ** 2).sum(axis=1))) for t in targets]
    )


def lj_regions(kind: str, h: GridHierarchy, n: int):
    """Degeneracy-fixing constraints for planar LJ clusters.

    ``symmetric``: returns the 3 finest-point indices whose shared-marginal
    entries are pinned to mass 1/n (equilateral triangle in the center).

    ``asymmetric``: returns per-particle admissible masks fixing particle 0
    at the center, particle 1 on the center row with x >= center, and
    particle 2 in the upper half-plane.
    """
    if kind == "symmetric":
        return lj_anchor_triangle(h)
    if kind != "asymmetric":
        raise ValueError(f"unknown kind {kind!r}")
    pts = h.points
    center = (h.lo + h.hi) / 2.0
    regions: dict[int, np.ndarray] = {}
    m0 = np.zeros(len(pts), dtype=bool)
    m0[int(np.argmin(((pts - center) ** 2).sum(axis=1)))] = True
    regions[0] = m0
    row_vals = np.unique(pts[:, 1])
    y_row = row_vals[np.argmin(np.abs(row_vals - center[1]))]
    regions[1] = np.isclose(pts[:, 1], y_row) & (pts[:, 0] >= center[0])
    regions[2] = pts[:, 1] >= center[1]
    return regions
