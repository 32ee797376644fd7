"""Assembly of 2-marginal relaxations as conic programs.

Two program families are produced: the general relaxation over per-particle
marginals (block moment matrix with diag(mu_i) blocks on the diagonal and
mu_ij blocks off the diagonal), and the permutation-invariant relaxation
over a shared pair marginal gamma and 1-marginal rho, whose PSD constraint
acts on diag(rho) + (N-1) gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .conic import ConicProgram, SolveReport
from .model import MarginalSolution


@dataclass
class RelaxationSpec:
    """Data defining one relaxation instance.

    ``active_points[i]`` is particle i's candidate point array (pins are
    realized by singleton active sets).  ``cost_blocks`` holds matrices for
    the pairs present in the objective; absent pairs still enter the moment
    matrix as zero-cost variables.  In the symmetric case there is a single
    shared point list and a single cost matrix under key ``(0, 1)``, and
    ``pinned_rho`` lists indices whose shared-marginal mass is fixed to 1/N.
    """

    active_points: list[np.ndarray]
    cost_blocks: dict[tuple[int, int], np.ndarray]
    upper_bound: float = 1.0
    symmetric: bool = False
    zero_diag: bool = False
    pinned_rho: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.upper_bound <= 1.0:
            raise ValueError("upper_bound must lie in (0, 1]")


def assemble_G(mu: list[np.ndarray], mu_pair: dict[tuple[int, int], np.ndarray]) -> np.ndarray:
    """Block moment matrix: diag(mu_i) diagonal blocks, mu_ij off-diagonal."""
    sizes = [len(m) for m in mu]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    n = offs[-1]
    G = np.zeros((n, n))
    for i, m in enumerate(mu):
        G[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = np.diag(m)
    for (i, j), blk in mu_pair.items():
        if blk.shape != (sizes[i], sizes[j]):
            raise ValueError(f"block ({i},{j}) has shape {blk.shape}, expected "
                             f"{(sizes[i], sizes[j])}")
        G[offs[i] : offs[i + 1], offs[j] : offs[j + 1]] = blk
        G[offs[j] : offs[j + 1], offs[i] : offs[i + 1]] = blk.T
    return G


def build_general(spec: RelaxationSpec) -> ConicProgram:
    """Conic program for the 2-marginal relaxation over all particle pairs."""
    sizes = [len(p) for p in spec.active_points]
    N = len(sizes)
    if N < 2:
        raise ValueError("need at least 2 particles")
    if any(s == 0 for s in sizes):
        raise ValueError("every particle needs a nonempty active set")
    offs = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offs[-1])
    u = spec.upper_bound
    prog = ConicProgram(n, meta={
        "kind": "general", "sizes": sizes, "offsets": offs,
        "points": spec.active_points,
    })
    for i in range(N):
        oi = offs[i]
        for a in range(sizes[i]):
            prog.set_entry_bounds(oi + a, oi + a, 0.0, 1.0)
            for b in range(a + 1, sizes[i]):
                prog.set_entry_bounds(oi + a, oi + b, 0.0, 0.0)
    for i in range(N):
        for j in range(i + 1, N):
            oi, oj = offs[i], offs[j]
            H = spec.cost_blocks.get((i, j))
            if H is not None and H.shape != (sizes[i], sizes[j]):
                raise ValueError(f"cost block ({i},{j}) has wrong shape")
            for a in range(sizes[i]):
                for b in range(sizes[j]):
                    prog.set_entry_bounds(oi + a, oj + b, 0.0, u)
                    if H is not None and H[a, b] != 0.0:
                        prog.add_objective_entry(oi + a, oj + b, float(H[a, b]))
            # local consistency: block row/column sums match the 1-marginals
            for a in range(sizes[i]):
                prog.add_equality(
                    [(oi + a, oj + b, 1.0) for b in range(sizes[j])]
                    + [(oi + a, oi + a, -1.0)],
                    0.0,
                )
            for b in range(sizes[j]):
                prog.add_equality(
                    [(oi + a, oj + b, 1.0) for a in range(sizes[i])]
                    + [(oj + b, oj + b, -1.0)],
                    0.0,
                )
    for i in range(N):
        prog.add_equality([(offs[i] + a, offs[i] + a, 1.0) for a in range(sizes[i])], 1.0)
    return prog


def build_symmetric(spec: RelaxationSpec, n_particles: int) -> ConicProgram:
    """Permutation-invariant relaxation on a shared point list.

    The matrix variable is M = diag(rho) + (N-1) gamma, which is PSD exactly
    when the paper-normalized constraint matrix is.  With a zeroed diagonal
    pair marginal, rho is the diagonal of M and gamma its off-diagonal part
    divided by N-1; otherwise rho enters as auxiliary scalars.
    """
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    if not spec.symmetric:
        raise ValueError("spec is not marked symmetric")
    pts = spec.active_points[0]
    n = len(pts)
    N = n_particles
    H = spec.cost_blocks.get((0, 1))
    if H is None or H.shape != (n, n):
        raise ValueError("symmetric build needs one (0, 1) cost block of side n")
    u = spec.upper_bound
    pins = set(int(a) for a in (spec.pinned_rho if spec.pinned_rho is not None else []))

    if spec.zero_diag:
        prog = ConicProgram(n, meta={
            "kind": "symmetric", "n_particles": N, "zero_diag": True, "points": pts,
        })
        for a in range(n):
            if a in pins:
                prog.set_entry_bounds(a, a, 1.0 / N, 1.0 / N)
            else:
                prog.set_entry_bounds(a, a, 0.0, 1.0)
            for b in range(a + 1, n):
                prog.set_entry_bounds(a, b, 0.0, (N - 1) * u)
                if H[a, b] != 0.0:
                    # objective N(N-1)/2 Tr[H gamma] with gamma = offdiag(M)/(N-1)
                    prog.add_objective_entry(a, b, N * float(H[a, b]))
        for a in range(n):
            prog.add_equality(
                [(a, b, 1.0) for b in range(n) if b != a] + [(a, a, -(N - 1.0))], 0.0
            )
        prog.add_equality([(a, a, 1.0) for a in range(n)], 1.0)
        return prog

    # diag(gamma) kept: rho and the scaled diagonal of gamma become extras
    prog = ConicProgram(n, extra=2 * n, meta={
        "kind": "symmetric", "n_particles": N, "zero_diag": False, "points": pts,
    })
    for a in range(n):
        rho_a, t_a = a, n + a  # t_a = (N-1) gamma_aa
        if a in pins:
            prog.set_extra_bounds(rho_a, 1.0 / N, 1.0 / N)
        else:
            prog.set_extra_bounds(rho_a, 0.0, 1.0)
        prog.set_extra_bounds(t_a, 0.0, (N - 1) * u)
        prog.set_entry_bounds(a, a, 0.0, np.inf)
        # M_aa = rho_a + (N-1) gamma_aa
        prog.add_equality([(a, a, 1.0)], 0.0, extras=[(rho_a, -1.0), (t_a, -1.0)])
        # gamma row sums equal rho:  sum_b M_ab = N rho_a
        prog.add_equality([(a, b, 1.0) for b in range(n)], 0.0, extras=[(rho_a, -float(N))])
        if H[a, a] != 0.0:
            prog.add_objective_extra(t_a, (N / 2.0) * float(H[a, a]))
        for b in range(a + 1, n):
            prog.set_entry_bounds(a, b, 0.0, (N - 1) * u)
            if H[a, b] != 0.0:
                prog.add_objective_entry(a, b, N * float(H[a, b]))
    prog.add_equality([], 1.0, extras=[(a, 1.0) for a in range(n)])
    return prog


def sublevel_bound(spec: RelaxationSpec, b: float, n_particles: int | None = None) -> ConicProgram:
    """Same relaxation with the entrywise pair-marginal cap replaced by ``b``."""
    if not 0.0 < b <= 1.0:
        raise ValueError("bound must lie in (0, 1]")
    capped = replace(spec, upper_bound=b)
    if capped.symmetric:
        if n_particles is None:
            raise ValueError("symmetric specs need the particle count")
        return build_symmetric(capped, n_particles)
    return build_general(capped)


def extract_solution(prog: ConicProgram, report: SolveReport) -> MarginalSolution:
    """Read marginals out of a solved program."""
    meta = prog.meta
    if meta.get("kind") == "general":
        offs = meta["offsets"]
        sizes = meta["sizes"]
        G = report.matrix
        mu = [np.diag(G[offs[i] : offs[i + 1], offs[i] : offs[i + 1]]).copy()
              for i in range(len(sizes))]
        mu_pair = {
            (i, j): G[offs[i] : offs[i + 1], offs[j] : offs[j + 1]].copy()
            for i in range(len(sizes))
            for j in range(i + 1, len(sizes))
        }
        return MarginalSolution(mu=mu, mu_pair=mu_pair, objective=report.objective)
    if meta.get("kind") == "symmetric":
        N = meta["n_particles"]
        M = report.matrix
        if meta["zero_diag"]:
            rho = np.diag(M).copy()
            gamma = (M - np.diag(np.diag(M))) / (N - 1)
        else:
            n = M.shape[0]
            rho = report.extra[:n].copy()
            t = report.extra[n:]
            gamma = (M - np.diag(np.diag(M))) / (N - 1) + np.diag(t / (N - 1))
        return MarginalSolution(mu=[], mu_pair={}, objective=report.objective,
                                rho=rho, gamma=gamma)
    raise ValueError("program has no marginal-extraction metadata")


def round_solution(sol: MarginalSolution, points: list[np.ndarray]) -> np.ndarray:
    """Per-particle argmax of the 1-marginal; ties break to the lowest index."""
    rows = []
    for m, pts in zip(sol.mu, points):
        rows.append(np.atleast_2d(pts)[int(np.argmax(m))])
    return np.array(rows)


@dataclass
class Certificate:
    exact: bool
    configuration: np.ndarray | None = None


def certify_exact(sol: MarginalSolution, points: list[np.ndarray], tol: float = 1e-2) -> Certificate:
    """Exact-recovery check: every 1-marginal must be a near-delta."""
    if not sol.mu:
        raise ValueError("certification needs per-particle marginals")
    if all(np.max(m) >= 1.0 - tol for m in sol.mu):
        return Certificate(exact=True, configuration=round_solution(sol, points))
    return Certificate(exact=False)
