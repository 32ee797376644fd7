"""First-order solver for the conic programs produced by this package.

Programs have the form

    minimize    <C, S> + c_extra . y
    subject to  linear equalities on (S, y)
                entrywise bounds on (S, y)
                S >= 0  (symmetric PSD)

where ``S`` is one symmetric matrix variable and ``y`` an optional vector of
auxiliary scalars.  The solver is a three-set consensus ADMM: one proximal
step projects onto the equality subspace (with the linear objective folded
in), one clips to the box, and one projects the matrix part onto the PSD
cone via eigendecomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg


_SQRT2 = math.sqrt(2.0)


def _check_symmetric(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(S, S.T, atol=1e-10 * (1 + np.abs(S).max())):
        raise ValueError("matrix is not symmetric")
    return S


def min_eigenvalue(S: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    S = _check_symmetric(S)
    return float(scipy.linalg.eigvalsh(S, subset_by_index=[0, 0])[0])


def project_psd(S: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) PSD matrix: clip negative eigenvalues to zero."""
    S = _check_symmetric(S)
    w, V = scipy.linalg.eigh(S)
    if w[0] >= 0:
        return S
    w = np.maximum(w, 0.0)
    return (V * w) @ V.T


class SymIndex:
    """Scaled upper-triangle vectorization of n x n symmetric matrices.

    Off-diagonal coordinates carry a sqrt(2) factor so that the euclidean
    inner product of vectorizations equals the Frobenius inner product.
    """

    def __init__(self, n: int):
        self.n = n
        self.rows, self.cols = np.triu_indices(n)
        self.size = len(self.rows)
        self.scale = np.where(self.rows == self.cols, 1.0, _SQRT2)
        self._lookup = np.full((n, n), -1, dtype=int)
        self._lookup[self.rows, self.cols] = np.arange(self.size)
        self._lookup[self.cols, self.rows] = np.arange(self.size)

    def index(self, r: int, c: int) -> int:
        return int(self._lookup[r, c])

    def svec(self, S: np.ndarray) -> np.ndarray:
        return S[self.rows, self.cols] * self.scale

    def unsvec(self, v: np.ndarray) -> np.ndarray:
        S = np.zeros((self.n, self.n))
        vals = v / self.scale
        S[self.rows, self.cols] = vals
        S[self.cols, self.rows] = vals
        return S


class SolveStatus(Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class SolveReport:
    """Outcome of one conic solve; ``state`` enables warm restarts."""

    matrix: np.ndarray
    extra: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    status: SolveStatus
    state: tuple = field(default=None, repr=False)


class ConicProgram:
    """Builder/container for one standard-form program.

    Entry-level methods take matrix positions ``(r, c)``; the symmetric
    mirror entry is the same variable.  Equalities and bounds default to
    "absent" (entries unconstrained apart from the PSD cone).
    """

    def __init__(self, n: int, extra: int = 0, meta: dict | None = None):
        if n < 1:
            raise ValueError("matrix side must be >= 1")
        self.sym = SymIndex(n)
        self.n = n
        self.extra = extra
        self.m = self.sym.size + extra
        self.c = np.zeros(self.m)
        self.lo = np.full(self.m, -np.inf)
        self.hi = np.full(self.m, np.inf)
        self._eq_rows: list[tuple[np.ndarray, np.ndarray]] = []
        self._eq_rhs: list[float] = []
        self.meta = meta or {}

    # -- variable addressing --------------------------------------------

    def _vidx(self, r: int, c: int) -> int:
        return self.sym.index(r, c)

    def extra_idx(self, j: int) -> int:
        if not 0 <= j < self.extra:
            raise IndexError("extra variable index out of range")
        return self.sym.size + j

    # -- program assembly -----------------------------------------------

    def add_objective_entry(self, r: int, c: int, coeff: float) -> None:
        """Add ``coeff * S[r, c]`` to the objective (mirror entry included)."""
        t = self._vidx(r, c)
        self.c[t] += coeff / self.sym.scale[t]

    def add_objective_extra(self, j: int, coeff: float) -> None:
        self.c[self.extra_idx(j)] += coeff

    def set_entry_bounds(self, r: int, c: int, lo: float, hi: float) -> None:
        t = self._vidx(r, c)
        self.lo[t] = lo * self.sym.scale[t]
        self.hi[t] = hi * self.sym.scale[t]

    def set_extra_bounds(self, j: int, lo: float, hi: float) -> None:
        t = self.extra_idx(j)
        self.lo[t] = lo
        self.hi[t] = hi

    def add_equality(self, entries, rhs: float, extras=()) -> None:
        """Add the row  sum coeff*S[r,c] + sum coeff*y[j] = rhs.

        ``entries`` is an iterable of ``(r, c, coeff)``; repeated references
        to the same variable accumulate.  ``extras`` holds ``(j, coeff)``.
        """
        idx: dict[int, float] = {}
        for r, c, coeff in entries:
            t = self._vidx(r, c)
            idx[t] = idx.get(t, 0.0) + coeff / self.sym.scale[t]
        for j, coeff in extras:
            t = self.extra_idx(j)
            idx[t] = idx.get(t, 0.0) + coeff
        cols = np.fromiter(idx.keys(), dtype=int, count=len(idx))
        vals = np.fromiter(idx.values(), dtype=float, count=len(idx))
        self._eq_rows.append((cols, vals))
        self._eq_rhs.append(float(rhs))

    # -- views ----------------------------------------------------------

    def equality_matrix(self):
        if not self._eq_rows:
            return None, np.zeros(0)
        indptr = np.zeros(len(self._eq_rows) + 1, dtype=int)
        for i, (cols, _) in enumerate(self._eq_rows):
            indptr[i + 1] = indptr[i] + len(cols)
        indices = np.concatenate([cols for cols, _ in self._eq_rows])
        data = np.concatenate([vals for _, vals in self._eq_rows])
        A = scipy.sparse.csr_matrix(
            (data, indices, indptr), shape=(len(self._eq_rows), self.m)
        )
        return A, np.array(self._eq_rhs)

    def objective_value(self, v: np.ndarray) -> float:
        return float(self.c @ v)

    def split(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Matrix part (as a symmetric matrix) and extra part of a v-vector."""
        return self.sym.unsvec(v[: self.sym.size]), v[self.sym.size :].copy()


def _feasibility(prog: ConicProgram, v, A, b) -> tuple[float, float, float]:
    eq = 0.0
    if A is not None:
        eq = float(np.max(np.abs(A @ v - b))) / (1.0 + float(np.max(np.abs(b))))
    box = float(np.max(np.maximum(np.maximum(prog.lo - v, v - prog.hi), 0.0)))
    S = prog.sym.unsvec(v[: prog.sym.size])
    lam = float(scipy.linalg.eigvalsh(S, subset_by_index=[0, 0])[0])
    psd = max(0.0, -lam)
    return eq, box, psd


def solve(
    prog: ConicProgram,
    tol: float = 1e-6,
    max_iter: int = 20000,
    warm_start: tuple | None = None,
    rho: float = 1.0,
    check_every: int = 25,
) -> SolveReport:
    """Run consensus ADMM on the program until residuals fall below ``tol``.

    ``warm_start`` accepts the ``state`` field of a previous report on the
    same program (or one with perturbed data of identical shapes).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = prog.m
    A, b = prog.equality_matrix()
    solve_normal = None
    if A is not None:
        AAt = (A @ A.T).tocsc()
        AAt = AAt + 1e-12 * scipy.sparse.identity(AAt.shape[0], format="csc")
        lu = scipy.sparse.linalg.splu(AAt)
        At = A.T.tocsr()

        def solve_normal(q):
            return q - At @ lu.solve(A @ q - b)

    nsym = prog.sym.size
    lo, hi = prog.lo, prog.hi
    # normalizing the cost vector leaves the solution set unchanged but keeps
    # the proximal steps well scaled when costs span many orders of magnitude
    cscale = max(1.0, float(np.abs(prog.c).max(initial=0.0)))
    c = prog.c / cscale

    if warm_start is not None:
        z, u1, u2, u3 = (np.array(w, dtype=float) for w in warm_start[:4])
        rho = float(warm_start[4])
    else:
        z = np.clip(np.zeros(m), lo, hi)
        u1 = np.zeros(m)
        u2 = np.zeros(m)
        u3 = np.zeros(m)

    def prox_psd(w):
        out = w.copy()
        S = prog.sym.unsvec(w[:nsym])
        wv, V = scipy.linalg.eigh(S)
        if wv[0] < 0:
            wv = np.maximum(wv, 0.0)
            out[:nsym] = prog.sym.svec((V * wv) @ V.T)
        return out

    status = SolveStatus.MAX_ITER
    pri_rep = dual_rep = gap = np.inf
    it = 0
    eq_hist: list[float] = []
    obj_prev = np.inf
    for it in range(1, max_iter + 1):
        q = z - u1 - c / rho
        x1 = solve_normal(q) if solve_normal is not None else q
        x2 = np.clip(z - u2, lo, hi)
        x3 = prox_psd(z - u3)
        z_old = z
        z = (x1 + u1 + x2 + u2 + x3 + u3) / 3.0
        u1 = u1 + x1 - z
        u2 = u2 + x2 - z
        u3 = u3 + x3 - z

        if it % check_every == 0 or it == max_iter or it <= 2:
            znorm = 1.0 + float(np.abs(z).max(initial=0.0))
            pri_raw = max(
                float(np.abs(x1 - z).max(initial=0.0)),
                float(np.abs(x2 - z).max(initial=0.0)),
                float(np.abs(x3 - z).max(initial=0.0)),
            )
            dual_raw = rho * float(np.abs(z - z_old).max(initial=0.0))
            eq, box, psd = _feasibility(prog, z, A, b)
            pri_rep = max(eq, box, psd) / znorm
            dual_rep = dual_raw / znorm
            obj = prog.objective_value(z)
            gap = abs(obj - obj_prev) / (1.0 + abs(obj))
            obj_prev = obj
            if pri_rep <= tol and dual_rep <= tol:
                status = SolveStatus.SOLVED
                break
            eq_hist.append(max(eq, box, psd))
            # stalled, persistently infeasible iterates
            if len(eq_hist) > 60 and eq_hist[-1] > 1e-2:
                recent = eq_hist[-40:]
                if max(recent) - min(recent) < 1e-10 * (1 + recent[-1]):
                    status = SolveStatus.INFEASIBLE
                    break
            # residual-balancing penalty update
            if pri_raw > 10.0 * dual_raw and rho < 1e6:
                rho *= 2.0
                u1 /= 2.0
                u2 /= 2.0
                u3 /= 2.0
            elif dual_raw > 10.0 * pri_raw and rho > 1e-6:
                rho /= 2.0
                u1 *= 2.0
                u2 *= 2.0
                u3 *= 2.0

    # report the box-clipped iterate: identical at convergence, and immune to
    # tiny bound violations being amplified by capped cost entries
    zc = np.clip(z, lo, hi)
    S, extra = prog.split(zc)
    return SolveReport(
        matrix=S,
        extra=extra,
        objective=prog.objective_value(zc),
        primal_residual=pri_rep,
        dual_residual=dual_rep,
        gap=gap,
        iterations=it,
        status=status,
        state=(z.copy(), u1.copy(), u2.copy(), u3.copy(), rho),
    )
