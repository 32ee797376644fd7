"""Independent oracles and reference optimizers.

Everything here is deliberately simple and separate from the relaxation
pipeline so it can serve as ground truth in tests: exhaustive enumeration,
a layered shortest-path dynamic program, the closed-form sublevel-set LP
optimizer, simulated annealing, and a monotone local refiner.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import PairwiseProblem

MAX_BRUTE_FORCE_STATES = 1_000_000


def brute_force(
    problem: PairwiseProblem, point_lists: list[np.ndarray]
) -> tuple[np.ndarray, float]:
    """Exact discrete minimum by enumeration; lexicographic tie-break."""
    sizes = [len(np.atleast_2d(p)) for p in point_lists]
    total = math.prod(sizes)
    if total > MAX_BRUTE_FORCE_STATES:
        raise ValueError(f"product space too large to enumerate ({total})")
    pts = [np.atleast_2d(p) for p in point_lists]
    N = problem.n_particles
    # precompute pairwise blocks once; enumeration then sums table lookups
    blocks = {}
    for i in range(N):
        for j in range(i + 1, N):
            b = np.asarray(problem.pair_cost(i, j, pts[i], pts[j]), dtype=float)
            blocks[(i, j)] = np.where(np.isfinite(b), b, np.inf)
    best_val = np.inf
    best_state = None
    for state in itertools.product(*(range(s) for s in sizes)):
        val = 0.0
        for (i, j), b in blocks.items():
            val += b[state[i], state[j]]
        if val < best_val:
            best_val = val
            best_state = state
    config = np.array([pts[i][best_state[i]] for i in range(N)])
    return config, float(best_val)


@dataclass
class ChainProblem:
    """Layered point lists with edge costs between consecutive layers.

    The first and last layers are singletons (the anchor endpoints).
    """

    layers: list[np.ndarray]
    edge_costs: list[np.ndarray]

    def __post_init__(self):
        if len(self.edge_costs) != len(self.layers) - 1:
            raise ValueError("need one edge-cost matrix per consecutive layer pair")
        if len(np.atleast_2d(self.layers[0])) != 1 or len(np.atleast_2d(self.layers[-1])) != 1:
            raise ValueError("first and last layers must be singletons")
        for k, C in enumerate(self.edge_costs):
            ni = len(np.atleast_2d(self.layers[k]))
            nj = len(np.atleast_2d(self.layers[k + 1]))
            if C.shape != (ni, nj):
                raise ValueError(f"edge cost {k} has shape {C.shape}, expected {(ni, nj)}")


def shortest_path(chain: ChainProblem) -> tuple[np.ndarray, float]:
    """Dynamic-programming optimum over layered source-to-sink paths."""
    n_layers = len(chain.layers)
    value = np.zeros(1)
    back: list[np.ndarray] = []
    for C in chain.edge_costs:
        totals = value[:, None] + C
        back.append(np.argmin(totals, axis=0))
        value = np.min(totals, axis=0)
    idx = [0]
    for k in range(n_layers - 2, -1, -1):
        idx.append(int(back[k][idx[-1]]))
    idx.reverse()
    path = np.array([np.atleast_2d(chain.layers[k])[idx[k]] for k in range(n_layers)])
    return path, float(value[0])


def sublevel_lp(costs: np.ndarray, t: float) -> np.ndarray:
    """Closed-form optimizer of the mass-t box LP over states.

    Unit mass goes on the floor(t) lowest-cost states and the fractional
    remainder t - floor(t) on the next one, so the total mass is exactly t
    and (for E strictly between consecutive order statistics) the support is
    the E-sublevel set.
    """
    if t < 1.0:
        raise ValueError("t must be >= 1")
    costs = np.asarray(costs, dtype=float)
    order = np.argsort(costs, kind="stable")
    mu = np.zeros(len(costs))
    full = int(math.floor(t))
    frac = t - full
    if full > len(costs) or (frac > 0 and full + 1 > len(costs)):
        raise ValueError("t exceeds the number of states")
    mu[order[:full]] = 1.0
    if frac > 0:
        mu[order[full]] = frac
    return mu


def simulated_annealing(
    problem: PairwiseProblem,
    lo,
    hi,
    seed: int,
    budget: int,
    t0: float | None = None,
    decay: float = 0.995,
    step: float | None = None,
) -> tuple[np.ndarray, float]:
    """Metropolis random walk with geometric cooling over the box domain.

    ``budget`` counts objective evaluations exactly, including those spent
    calibrating the initial temperature.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    N, d = problem.n_particles, problem.dim
    if step is None:
        step = float(np.max(hi - lo)) / 20.0
    evals = 0

    def energy(x):
        nonlocal evals
        evals += 1
        return problem.energy(x)

    calib_best = None
    if t0 is None:
        calib = min(100, max(1, budget // 10))
        samples = []
        for _ in range(calib):
            if evals >= budget:
                break
            cand = lo + rng.random((N, d)) * (hi - lo)
            val = energy(cand)
            samples.append(val)
            if calib_best is None or val < calib_best[1]:
                calib_best = (cand, val)
        t0 = float(np.std(samples)) if len(samples) > 1 else 1.0
        t0 = max(t0, 1e-12)

    x = lo + rng.random((N, d)) * (hi - lo)
    if evals >= budget:
        return calib_best if calib_best is not None else (x, float("inf"))
    fx = energy(x)
    best_x, best_f = x.copy(), fx
    if calib_best is not None and calib_best[1] < best_f:
        best_x, best_f = calib_best[0].copy(), calib_best[1]
    temp = t0
    while evals < budget:
        prop = np.clip(x + rng.normal(0.0, step, size=(N, d)), lo, hi)
        fp = energy(prop)
        if fp <= fx or rng.random() < math.exp(-(fp - fx) / max(temp, 1e-300)):
            x, fx = prop, fp
            if fx < best_f:
                best_x, best_f = x.copy(), fx
        temp *= decay
    return best_x, float(best_f)


def _finite_difference_grad(f, x: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for t in range(flat.size):
        old = flat[t]
        flat[t] = old + h
        fp = f(x)
        flat[t] = old - h
        fm = f(x)
        flat[t] = old
        gf[t] = (fp - fm) / (2.0 * h)
    return g


def local_refine(
    problem: PairwiseProblem,
    start: np.ndarray,
    lo,
    hi,
    tol: float = 1e-8,
    max_iter: int = 2000,
    grad=None,
    fd_step: float | None = None,
    fixed=None,
) -> tuple[np.ndarray, float]:
    """Monotone projected descent with backtracking from a feasible start.

    Uses a Barzilai-Borwein step safeguarded by backtracking so the
    objective never increases; gradients are analytic when supplied and
    central finite differences otherwise.  When the gradient step stalls —
    which happens at kinks of non-smooth objectives — a coordinate-wise
    compass search takes over and shrinks its step until no axis move
    improves the objective.  ``fixed`` lists particle indices (rows of
    ``start``) that are never moved.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.clip(np.asarray(start, dtype=float).copy(), lo, hi)
    free = np.ones(x.shape, dtype=bool)
    if fixed is not None:
        free[np.asarray(list(fixed), dtype=int)] = False
    f = problem.energy
    fx = f(x)
    if not np.isfinite(fx):
        raise ValueError("objective is not finite at the start point")
    x, fx = _try_polish(problem, x, fx, lo, hi)
    if fd_step is None:
        fd_step = 1e-6 * float(np.max(hi - lo))
    raw_g = grad if grad is not None else (lambda y: _finite_difference_grad(f, y, fd_step))
    gfun = lambda y: np.where(free, raw_g(y), 0.0)  # noqa: E731
    g = gfun(x)
    alpha = 1.0 / (1.0 + float(np.linalg.norm(g)))
    x_prev, g_prev = None, None
    for _ in range(max_iter):
        pg = x - np.clip(x - g, lo, hi)
        if np.linalg.norm(pg) <= tol:
            break
        if x_prev is not None:
            sdiff = (x - x_prev).ravel()
            ydiff = (g - g_prev).ravel()
            sy = float(sdiff @ ydiff)
            if sy > 1e-300:
                alpha = float(sdiff @ sdiff) / sy
            alpha = float(np.clip(alpha, 1e-12, 1e6))
        accepted = False
        a = alpha
        for _ in range(60):
            cand = np.clip(x - a * g, lo, hi)
            fc = f(cand)
            if np.isfinite(fc) and fc < fx:
                accepted = True
                break
            a *= 0.5
        if not accepted:
            break  # stalled: descent direction exhausted at machine scale
        x_prev, g_prev = x, g
        x, fx = cand, fc
        g = gfun(x)
    x, fx = _compass_polish(f, x, fx, lo, hi, free, tol)
    x, fx = _try_polish(problem, x, fx, lo, hi)
    return x, float(fx)


def _try_polish(problem, x, fx, lo, hi):
    """Apply the problem's structural polish if it improves the objective."""
    if problem.local_polish is None:
        return x, fx
    cand, fc = problem.local_polish(x)
    cand = np.clip(np.asarray(cand, dtype=float), lo, hi)
    fc = problem.energy(cand)
    if np.isfinite(fc) and fc < fx:
        return cand, float(fc)
    return x, fx


def _compass_polish(f, x, fx, lo, hi, free, tol):
    """Coordinate-wise pattern search; handles kinks that defeat gradients.

    Tries +/- step moves along every free coordinate, halving the step
    whenever a full sweep yields no improvement, until the step falls
    below ``tol`` times the domain width.
    """
    coords = np.argwhere(free)
    if len(coords) == 0:
        return x, fx
    width = float(np.max(hi - lo))
    step = 1e-2 * width
    floor = max(tol, 1e-12) * width
    while step > floor:
        improved = False
        for i, j in coords:
            for sgn in (1.0, -1.0):
                cand = x.copy()
                cand[i, j] = np.clip(x[i, j] + sgn * step, lo[j], hi[j])
                if cand[i, j] == x[i, j]:
                    continue
                fc = f(cand)
                if np.isfinite(fc) and fc < fx:
                    x, fx = cand, fc
                    improved = True
                    break
        if not improved:
            step *= 0.5
    return x, fx


def lj_gradient(inst) -> callable:
    """Analytic gradient of the total LJ energy for ``local_refine``."""

    def grad(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        N = inst.n_particles
        for i in range(N):
            for j in range(i + 1, N):
                diff = x[i] - x[j]
                d2 = float(diff @ diff)
                if d2 == 0.0:
                    continue
                d = math.sqrt(d2)
                s = (inst.r[i, j] / d) ** 6
                # dV/dd = 12 eps (s - s^2) / d
                coef = 12.0 * inst.epsilon * (s - s * s) / d2
                g[i] += coef * diff
                g[j] -= coef * diff
        return g

    return grad
