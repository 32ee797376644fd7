"""Near-optimal configuration sampling via randomized cost perturbations.

The finest-level restricted relaxation is re-solved with the pair costs
perturbed by a scaled Gaussian matrix and with the entrywise cap removed.
Small perturbations break ties between near-optimal configurations, so
repeated draws explore the low-energy landscape.  When the perturbed solve
is not integral, a configuration is read off the dominant eigenvector of
the moment matrix; a degenerate dominant eigenvalue triggers a retry with a
fresh draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import conic
from .model import PairwiseProblem, discretize_pair
from .relax import (
    RelaxationSpec,
    build_general,
    build_symmetric,
    extract_solution,
    round_solution,
)

#: relative gap under which the two largest eigenvalues count as degenerate
EIGENGAP_TOL = 1e-8


@dataclass
class Sample:
    """One drawn configuration with its unperturbed energy."""

    configuration: np.ndarray
    energy: float
    perturbed_objective: float
    integral: bool
    seed: int
    retries: int = 0


def _perturb_general(blocks, lam, rng):
    return {
        key: H + lam * rng.standard_normal(H.shape) for key, H in blocks.items()
    }


def _perturb_symmetric(H, lam, rng):
    R = rng.standard_normal(H.shape)
    R = (R + R.T) / np.sqrt(2.0)
    np.fill_diagonal(R, 0.0)
    return H + lam * R


def _dominant_eigvec(M: np.ndarray) -> tuple[np.ndarray, bool]:
    """Top eigenvector (sign-fixed to nonnegative mass) and degeneracy flag."""
    w, V = scipy.linalg.eigh(M)
    top = w[-1]
    degenerate = len(w) > 1 and (top - w[-2]) <= EIGENGAP_TOL * max(1.0, abs(top))
    v = V[:, -1]
    if v.sum() < 0:
        v = -v
    return v, degenerate


def _finest_blocks(problem, points, cap):
    blocks = {}
    N = problem.n_particles
    for i in range(N):
        for j in range(i + 1, N):
            if problem.interacts is not None and not problem.interacts(i, j):
                continue
            blocks[(i, j)] = discretize_pair(problem, i, j, points[i], points[j],
                                             cap=cap)
    return blocks


def default_lam(blocks) -> float:
    """Automatic perturbation scale from the low end of the cost landscape.

    1% of the spread between the smallest and 5th-smallest pairwise cost
    values on the active support (floored away from zero).
    """
    if isinstance(blocks, dict):
        vals = np.concatenate([np.asarray(H, float).ravel() for H in blocks.values()])
    else:
        vals = np.asarray(blocks, float).ravel()
    vals = np.sort(vals)
    k = min(4, len(vals) - 1)
    return max(0.01 * float(vals[k] - vals[0]), 1e-12)


def sample_configuration(
    problem: PairwiseProblem,
    points: list[np.ndarray],
    lam: float | None,
    seed: int,
    pinned_rho: np.ndarray | None = None,
    tol: float = 1e-6,
    max_iter: int = 20000,
    max_retries: int = 5,
    cost_cap: float = 1e6,
    min_separation: float | None = None,
) -> Sample:
    """Draw one configuration from the perturbed restricted relaxation.

    ``points`` lists each particle's finest candidate coordinates (one shared
    array for permutation-invariant problems).  ``lam`` scales the Gaussian
    perturbation (``None`` uses :func:`default_lam`); the returned energy is
    always evaluated under the original cost.  ``min_separation`` (symmetric
    problems) reads one representative per support cluster instead of the
    top weight entries, so a well spanning adjacent cells yields one
    particle, not several.
    """
    if lam is not None and lam < 0:
        raise ValueError("lam must be nonnegative")
    seq = np.random.SeedSequence(seed)
    if problem.symmetric:
        base = discretize_pair(problem, 0, 1, points[0], points[0], cap=cost_cap)
        base = (base + base.T) / 2.0
        np.fill_diagonal(base, 0.0)
    else:
        base = _finest_blocks(problem, points, cost_cap)
    if lam is None:
        lam = default_lam(base)

    last_err = None
    for retry in range(max_retries + 1):
        rng = np.random.default_rng(seq.spawn(1)[0] if retry else seq)
        if problem.symmetric:
            H = _perturb_symmetric(base, lam, rng)
            spec = RelaxationSpec(
                active_points=[points[0]], cost_blocks={(0, 1): H},
                upper_bound=1.0, symmetric=True, zero_diag=True,
                pinned_rho=pinned_rho,
            )
            prog = build_symmetric(spec, problem.n_particles)
        else:
            blocks = _perturb_general(base, lam, rng)
            spec = RelaxationSpec(active_points=points, cost_blocks=blocks,
                                  upper_bound=1.0)
            prog = build_general(spec)
        report = conic.solve(prog, tol=tol, max_iter=max_iter)
        sol = extract_solution(prog, report)

        if problem.symmetric:
            M = report.matrix
            diag = np.diag(M)
            # integral shared marginal: exactly N entries of mass 1/N
            hot = diag >= (1.0 / problem.n_particles) * 0.99
            if int(hot.sum()) == problem.n_particles:
                config = np.atleast_2d(points[0])[np.flatnonzero(hot)]
                return Sample(configuration=config, energy=problem.energy(config),
                              perturbed_objective=report.objective, integral=True,
                              seed=seed, retries=retry)
            v, degenerate = _dominant_eigvec(M)
            if degenerate:
                last_err = "degenerate dominant eigenvalue"
                continue
            pts0 = np.atleast_2d(points[0])
            if min_separation is not None:
                from .mmr import cluster_points

                clusters = cluster_points(pts0, min_separation)
                if len(clusters) < problem.n_particles:
                    last_err = "support has too few separated clusters"
                    continue
                w = np.abs(v)
                mass = np.array([w[c].sum() for c in clusters])
                top = np.argsort(mass, kind="stable")[::-1][:problem.n_particles]
                reps = [clusters[c][np.argmax(w[clusters[c]])] for c in top]
                config, ok = pts0[np.array(reps)], True
            else:
                config, ok = _top_n_distinct(v, pts0, problem.n_particles)
            if not ok:
                last_err = "dominant eigenvector has too few distinct supports"
                continue
            return Sample(configuration=config, energy=problem.energy(config),
                          perturbed_objective=report.objective, integral=False,
                          seed=seed, retries=retry)

        if all(np.max(m) >= 0.99 for m in sol.mu):
            config = round_solution(sol, points)
            return Sample(configuration=config, energy=problem.energy(config),
                          perturbed_objective=report.objective, integral=True,
                          seed=seed, retries=retry)
        G = report.matrix
        v, degenerate = _dominant_eigvec(G)
        if degenerate:
            last_err = "degenerate dominant eigenvalue"
            continue
        offs = prog.meta["offsets"]
        config = np.array([
            np.atleast_2d(points[i])[int(np.argmax(np.abs(v[offs[i]:offs[i + 1]])))]
            for i in range(problem.n_particles)
        ])
        return Sample(configuration=config, energy=problem.energy(config),
                      perturbed_objective=report.objective, integral=False,
                      seed=seed, retries=retry)

    raise RuntimeError(f"sampling failed after {max_retries} retries: {last_err}")


def _top_n_distinct(weights: np.ndarray, points: np.ndarray, n: int):
    order = np.argsort(np.abs(weights), kind="stable")[::-1]
    chosen: list[int] = []
    seen: set[tuple] = set()
    for t in order:
        key = tuple(np.round(points[t], 12))
        if key in seen:
            continue
        seen.add(key)
        chosen.append(int(t))
        if len(chosen) == n:
            return points[np.array(chosen)], True
    return None, False


def sample_many(
    problem: PairwiseProblem,
    points: list[np.ndarray],
    lam: float,
    seeds,
    **kwargs,
) -> list[Sample]:
    """Independent draws, one per seed."""
    return [sample_configuration(problem, points, lam, int(s), **kwargs)
            for s in seeds]
