"""Multiscale driver: coarsen, propagate, refine, level by level.

Each level solves the 2-marginal relaxation on the currently selected parts
(with the level's entrywise cap on pair marginals), thresholds the
1-marginals to shrink supports, expands the survivors to grid neighbors and
re-solves a few times, then descends to the children at the next level.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .grids import GridHierarchy, NeighborhoodPolicy
from .model import MarginalSolution, PairwiseProblem, discretize_pair, part_sample_points
from .relax import RelaxationSpec, build_general, build_symmetric, extract_solution


class MmrInfeasibleError(RuntimeError):
    """A level's relaxation was reported infeasible."""


def upper_bound_schedule(u_min: float, alpha: float, levels: int) -> np.ndarray:
    """u(1) = u_min, then u(k+1) = u(k) + alpha (1 - u(k))."""
    if not 0.0 < u_min <= 1.0:
        raise ValueError("u_min must lie in (0, 1]")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    out = np.empty(levels)
    out[0] = u_min
    for k in range(1, levels):
        out[k] = out[k - 1] + alpha * (1.0 - out[k - 1])
    return out


@dataclass
class MmrConfig:
    """Schedule and solver knobs for one multiscale run.

    Thresholds come either from ``eta`` directly (scalar or per level) or
    from the coupling eta(k) = beta * u(k); upper bounds either from ``u``
    directly or from the (u_min, alpha) growth recurrence.
    """

    levels: int
    eta: float | tuple | list | None = None
    beta: float | None = None
    u: tuple | list | None = None
    u_min: float = 1.0
    alpha: float = 0.0
    min_support: int = 3
    refine_iters: int = 3
    neighborhood: NeighborhoodPolicy = NeighborhoodPolicy.MOORE
    solver_tol: float = 1e-3
    solver_max_iter: int = 20000
    sample_depth: int = 2
    cost_cap: float = 1e6

    def upper_bounds(self) -> np.ndarray:
        if self.u is not None:
            u = np.broadcast_to(np.asarray(self.u, dtype=float), (self.levels,)).copy()
        else:
            u = upper_bound_schedule(self.u_min, self.alpha, self.levels)
        if np.any(u <= 0) or np.any(u > 1) or np.any(np.diff(u) < -1e-12):
            raise ValueError("upper bounds must lie in (0, 1] and be non-decreasing")
        return u

    def thresholds(self, u: np.ndarray) -> np.ndarray:
        if self.eta is not None:
            eta = np.broadcast_to(np.asarray(self.eta, dtype=float), (self.levels,)).copy()
        elif self.beta is not None:
            eta = self.beta * u
        else:
            raise ValueError("config needs either eta or beta")
        if np.any(eta < 0) or np.any(eta >= 1):
            raise ValueError("thresholds must lie in [0, 1)")
        return eta

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.refine_iters < 1:
            raise ValueError("refine_iters must be >= 1")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")


@dataclass
class LevelRecord:
    level: int
    parts_initial: list[np.ndarray]
    parts_propagated: list[np.ndarray]
    parts_final: list[np.ndarray]
    support_sizes: list[int]
    solver_iterations: list[int]
    solver_residuals: list[float]
    statuses: list[str]
    refine_passes: int
    wall_time: float
    # post-threshold support sizes after the propagate pass and after each
    # refinement pass, in order
    pass_support_sizes: list[list[int]] = field(default_factory=list)


@dataclass
class MmrTrace:
    records: list[LevelRecord] = field(default_factory=list)


@dataclass
class MmrResult:
    configuration: np.ndarray
    parts: list[np.ndarray]
    points: list[np.ndarray]
    solution: MarginalSolution
    trace: MmrTrace
    fell_back: bool = False


# -- support selection ----------------------------------------------------


def threshold_support(mu: np.ndarray, eta: float, min_support: int,
                      forced: np.ndarray | None = None) -> np.ndarray:
    """Positions with mass >= eta, floored to the min_support largest ones.

    ``forced`` positions are always retained (pinned anchors).
    """
    keep = np.flatnonzero(mu >= eta)
    floor = min(min_support, len(mu))
    if len(keep) < floor:
        keep = np.argsort(mu, kind="stable")[::-1][:floor]
    if forced is not None and len(forced):
        keep = np.union1d(keep, forced)
    return np.sort(keep)


# -- cost assembly ---------------------------------------------------------


#: soft cap on the number of cost evaluations materialized at once
_BLOCK_CHUNK = 4_000_000


def _pooled_block(problem, i, j, coords_i, grp_count_i, coords_j, grp_count_j, cap):
    ni = len(coords_i) // grp_count_i
    nj = len(coords_j) // grp_count_j
    rows_at_once = max(1, _BLOCK_CHUNK // max(1, len(coords_j)) // max(1, ni))
    out = np.empty((grp_count_i, grp_count_j))
    for start in range(0, grp_count_i, rows_at_once):
        stop = min(start + rows_at_once, grp_count_i)
        sub = discretize_pair(
            problem, i, j, coords_i[start * ni : stop * ni], coords_j, cap=cap
        )
        out[start:stop] = sub.reshape(stop - start, ni, grp_count_j, nj).mean(axis=(1, 3))
    return out


class _Active:
    """One particle's discretization at a level: parts or an exact pin."""

    def __init__(self, parts: np.ndarray, points: np.ndarray, pin: np.ndarray | None):
        self.parts = parts
        self.points = points  # representative coords per active position
        self.pin = pin

    @property
    def size(self) -> int:
        return 1 if self.pin is not None else len(self.parts)

    def samples(self, h: GridHierarchy, level: int, depth: int) -> np.ndarray:
        if self.pin is not None:
            return self.pin.reshape(1, -1)
        coords, _ = part_sample_points(h, level, self.parts, depth)
        return coords


def _level_blocks(problem, h, level, active: list[_Active], cfg: MmrConfig):
    blocks = {}
    N = problem.n_particles
    samples = [a.samples(h, level, cfg.sample_depth) for a in active]
    for i in range(N):
        for j in range(i + 1, N):
            if problem.interacts is not None and not problem.interacts(i, j):
                continue
            blocks[(i, j)] = _pooled_block(
                problem, i, j, samples[i], active[i].size,
                samples[j], active[j].size, cfg.cost_cap,
            )
    return blocks


def _solve_level(spec_points, blocks, u, tol, max_iter, symmetric=False,
                 n_particles=None, pinned_rho=None):
    spec = RelaxationSpec(
        active_points=spec_points, cost_blocks=blocks, upper_bound=u,
        symmetric=symmetric, zero_diag=symmetric, pinned_rho=pinned_rho,
    )
    prog = build_symmetric(spec, n_particles) if symmetric else build_general(spec)
    report = conic.solve(prog, tol=tol, max_iter=max_iter)
    if report.status is conic.SolveStatus.INFEASIBLE:
        raise MmrInfeasibleError("level relaxation reported infeasible")
    if report.status is conic.SolveStatus.MAX_ITER:
        warnings.warn("level solve hit the iteration cap; using the best iterate",
                      RuntimeWarning, stacklevel=2)
    return extract_solution(prog, report), report


# -- general (per-particle) pipeline ---------------------------------------


def run(
    problem: PairwiseProblem,
    h: GridHierarchy,
    config: MmrConfig,
    regions: dict[int, np.ndarray] | None = None,
    pinned_points: np.ndarray | None = None,
) -> MmrResult:
    """Execute the full multiscale pipeline and return the finest output.

    ``regions`` maps particles to admissible finest-point masks; a singleton
    mask pins the particle to that exact point throughout.  Symmetric
    problems take the shared pipeline with ``pinned_points`` (finest indices
    whose shared-marginal mass is fixed to 1/N).
    """
    if config.levels > h.levels:
        raise ValueError("config.levels exceeds the hierarchy depth")
    if problem.symmetric:
        return _run_symmetric(problem, h, config, pinned_points)
    return _run_general(problem, h, config, regions or {})


def _run_general(problem, h, config, regions):
    N = problem.n_particles
    K = config.levels
    u_sched = config.upper_bounds()
    eta_sched = config.thresholds(u_sched)
    pins: dict[int, np.ndarray] = {}
    pin_idx: dict[int, int] = {}
    masks: dict[int, np.ndarray] = {}
    for i, mask in regions.items():
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            raise ValueError(f"particle {i} has an empty admissible region")
        if len(idx) == 1:
            pins[i] = h.points[idx[0]].copy()
            pin_idx[i] = int(idx[0])
        else:
            masks[i] = np.asarray(mask, dtype=bool)

    def admissible(i, level):
        if i in masks:
            return np.unique(h.part_of_point(level, np.flatnonzero(masks[i])))
        return np.arange(h.num_parts(level))

    def make_active(i, level, parts):
        if i in pins:
            part = h.part_of_point(level, [pin_idx[i]])
            return _Active(parts=part, points=pins[i].reshape(1, -1), pin=pins[i])
        return _Active(parts=parts, points=h.part_centers(level)[parts], pin=None)

    trace = MmrTrace()
    parts = [admissible(i, 1) for i in range(N)]
    last_config = None
    fell_back = False
    solution = None
    active: list[_Active] = []

    for level in range(1, K + 1):
        t_start = time.perf_counter()
        if level > 1:
            parts = [
                np.intersect1d(h.children_of(level - 1, p), admissible(i, level))
                for i, p in enumerate(parts)
            ]
        parts_initial = [p.copy() for p in parts]
        iters, resids, statuses = [], [], []

        try:
            # propagate
            active = [make_active(i, level, parts[i]) for i in range(N)]
            blocks = _level_blocks(problem, h, level, active, config)
            solution, rep = _solve_level(
                [a.points for a in active], blocks, u_sched[level - 1],
                config.solver_tol, config.solver_max_iter,
            )
            iters.append(rep.iterations)
            resids.append(rep.primal_residual)
            statuses.append(rep.status.value)
            parts = [
                a.parts if a.pin is not None
                else a.parts[threshold_support(solution.mu[i], eta_sched[level - 1],
                                               config.min_support)]
                for i, a in enumerate(active)
            ]
            parts_propagated = [p.copy() for p in parts]
            pass_sizes = [[len(p) for p in parts]]

            # refine
            passes = 0
            seen = {tuple(tuple(p) for p in parts)}
            for _ in range(config.refine_iters):
                passes += 1
                expanded = [
                    parts[i] if i in pins
                    else np.intersect1d(
                        h.adjacent_parts(level, parts[i], config.neighborhood),
                        admissible(i, level),
                    )
                    for i in range(N)
                ]
                active = [make_active(i, level, expanded[i]) for i in range(N)]
                blocks = _level_blocks(problem, h, level, active, config)
                solution, rep = _solve_level(
                    [a.points for a in active], blocks, u_sched[level - 1],
                    config.solver_tol, config.solver_max_iter,
                )
                iters.append(rep.iterations)
                resids.append(rep.primal_residual)
                statuses.append(rep.status.value)
                new_parts = [
                    a.parts if a.pin is not None
                    else a.parts[threshold_support(solution.mu[i], eta_sched[level - 1],
                                                   config.min_support)]
                    for i, a in enumerate(active)
                ]
                key = tuple(tuple(p) for p in new_parts)
                parts = new_parts
                pass_sizes.append([len(p) for p in parts])
                if key in seen:  # fixed point or cycle: more passes cannot help
                    break
                seen.add(key)
        except MmrInfeasibleError:
            if level == K and last_config is not None:
                fell_back = True
                parts = [p.copy() for p in trace.records[-1].parts_final]
                break
            raise

        trace.records.append(LevelRecord(
            level=level,
            parts_initial=parts_initial,
            parts_propagated=parts_propagated,
            parts_final=[p.copy() for p in parts],
            support_sizes=[len(p) for p in parts],
            solver_iterations=iters,
            solver_residuals=resids,
            statuses=statuses,
            refine_passes=passes,
            wall_time=time.perf_counter() - t_start,
            pass_support_sizes=pass_sizes,
        ))
        # marginals restricted to the kept supports (pins stay deltas)
        pts_now = [make_active(i, level, parts[i]).points for i in range(N)]
        mu_now = [
            np.array([1.0]) if active[i].pin is not None
            else _restrict_mu(solution.mu[i], active[i].parts, parts[i])
            for i in range(N)
        ]
        last_config = np.array([
            pts_now[i][int(np.argmax(mu_now[i]))] for i in range(N)
        ])
        final_points, final_mu = pts_now, mu_now

    final_solution = MarginalSolution(mu=final_mu, mu_pair=solution.mu_pair,
                                      objective=solution.objective)
    return MmrResult(
        configuration=last_config,
        parts=parts,
        points=final_points,
        solution=final_solution,
        trace=trace,
        fell_back=fell_back,
    )


def _restrict_mu(mu: np.ndarray, solved_parts: np.ndarray, kept_parts: np.ndarray) -> np.ndarray:
    pos = {int(p): t for t, p in enumerate(solved_parts)}
    return np.array([mu[pos[int(p)]] for p in kept_parts])


# -- symmetric (shared-marginal) pipeline -----------------------------------


def _run_symmetric(problem, h, config, pinned_points):
    N = problem.n_particles
    K = config.levels
    u_sched = config.upper_bounds()
    eta_sched = config.thresholds(u_sched)
    pinned_points = np.asarray(pinned_points if pinned_points is not None else [], dtype=int)
    floor = max(config.min_support, N)

    def pinned_parts(level):
        return np.unique(h.part_of_point(level, pinned_points)) if len(pinned_points) else np.array([], dtype=int)

    def pin_positions(level, parts):
        pp = pinned_parts(level)
        return np.flatnonzero(np.isin(parts, pp))

    def solve_on(level, parts):
        coords, _ = part_sample_points(h, level, parts, config.sample_depth)
        per = len(coords) // len(parts)
        H = _pooled_block(problem, 0, 1, coords, len(parts), coords, len(parts),
                          config.cost_cap)
        H = (H + H.T) / 2.0
        np.fill_diagonal(H, 0.0)
        return _solve_level(
            [h.part_centers(level)[parts]], {(0, 1): H}, u_sched[level - 1],
            config.solver_tol, config.solver_max_iter,
            symmetric=True, n_particles=N, pinned_rho=pin_positions(level, parts),
        )

    trace = MmrTrace()
    parts = np.arange(h.num_parts(1))
    solution = None
    for level in range(1, K + 1):
        t_start = time.perf_counter()
        if level > 1:
            parts = np.union1d(h.children_of(level - 1, parts), pinned_parts(level))
        parts_initial = parts.copy()
        iters, resids, statuses = [], [], []

        solution, rep = solve_on(level, parts)
        iters.append(rep.iterations)
        resids.append(rep.primal_residual)
        statuses.append(rep.status.value)
        keep = threshold_support(solution.rho, eta_sched[level - 1], floor,
                                 forced=pin_positions(level, parts))
        parts = parts[keep]
        parts_propagated = parts.copy()
        pass_sizes = [[len(parts)]]

        passes = 0
        seen = {tuple(parts)}
        for _ in range(config.refine_iters):
            passes += 1
            expanded = np.union1d(
                h.adjacent_parts(level, parts, config.neighborhood), pinned_parts(level)
            )
            solution, rep = solve_on(level, expanded)
            iters.append(rep.iterations)
            resids.append(rep.primal_residual)
            statuses.append(rep.status.value)
            keep = threshold_support(solution.rho, eta_sched[level - 1], floor,
                                     forced=pin_positions(level, expanded))
            new_parts = expanded[keep]
            key = tuple(new_parts)
            parts = new_parts
            pass_sizes.append([len(parts)])
            if key in seen:  # fixed point or cycle: more passes cannot help
                break
            seen.add(key)

        trace.records.append(LevelRecord(
            level=level,
            parts_initial=[parts_initial],
            parts_propagated=[parts_propagated],
            parts_final=[parts.copy()],
            support_sizes=[len(parts)],
            solver_iterations=iters,
            solver_residuals=resids,
            statuses=statuses,
            refine_passes=passes,
            wall_time=time.perf_counter() - t_start,
            pass_support_sizes=pass_sizes,
        ))

    # re-solve on the final support so rho matches the kept points exactly
    points = h.part_centers(K)[parts]
    solution, _ = solve_on(K, parts)
    # one optimizer well may span several adjacent cells of the support, so
    # pick the N heaviest well-separated representatives, not the N heaviest
    # cells
    radius = 1.5 * float(np.max(h.spacing(K)))
    config_points = select_separated(solution.rho, points, N, radius)
    final = MarginalSolution(mu=[], mu_pair={}, objective=solution.objective,
                             rho=solution.rho, gamma=solution.gamma)
    return MmrResult(
        configuration=config_points,
        parts=[parts],
        points=[points],
        solution=final,
        trace=trace,
    )


def cluster_points(points: np.ndarray, radius: float) -> list[np.ndarray]:
    """Single-linkage clusters: points within ``radius`` are connected."""
    points = np.asarray(points, dtype=float)
    m = len(points)
    parent = np.arange(m)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(m):
        d2 = ((points - points[a]) ** 2).sum(axis=1)
        for b in np.flatnonzero(d2 <= radius * radius):
            ra, rb = find(a), find(int(b))
            if ra != rb:
                parent[rb] = ra
    roots = np.array([find(a) for a in range(m)])
    return [np.flatnonzero(roots == r) for r in np.unique(roots)]


def select_separated(
    weights: np.ndarray, points: np.ndarray, n: int, radius: float
) -> np.ndarray:
    """The heaviest point of each of the n heaviest clusters.

    Falls back to :func:`top_n_points` when the support holds fewer than n
    clusters at the given separation.
    """
    clusters = cluster_points(points, radius)
    if len(clusters) < n:
        return top_n_points(weights, points, n)
    mass = np.array([weights[c].sum() for c in clusters])
    chosen = np.argsort(mass, kind="stable")[::-1][:n]
    reps = [clusters[c][np.argmax(weights[clusters[c]])] for c in chosen]
    return points[np.array(reps)]


def top_n_points(weights: np.ndarray, points: np.ndarray, n: int) -> np.ndarray:
    """The n points with the largest weights (descending), skipping repeats."""
    order = np.argsort(weights, kind="stable")[::-1]
    chosen: list[int] = []
    seen: set[tuple] = set()
    for t in order:
        key = tuple(np.round(points[t], 12))
        if key in seen:
            continue
        seen.add(key)
        chosen.append(int(t))
        if len(chosen) == n:
            break
    if len(chosen) < n:
        raise ValueError("support has fewer distinct points than particles")
    return points[np.array(chosen)]
