"""Simplex LP solver with active-set extraction, a brute-force oracle and the backward pass.

Problems have the form::

    minimise   c . d
    subject to d >= lower_bounds
               a_i . d >= rhs_i     for every inequality row i

:func:`solve_lp` shifts to ``x = d - lower_bounds >= 0`` and runs a two-phase
revised simplex (Bland's rule by default) on the dual ``max b'.y  s.t.
A^T y <= c, y >= 0``. The dual has one equality row per primal variable, so
the basis is ``n x n`` however many inequality rows there are, and pricing is
a sparse product with ``A``. An optimal dual basis identifies exactly ``n``
tight primal constraints: basic ``y_i`` mark tight rows, basic slacks ``s_j``
mark tight bounds.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .errors import SingularActiveSet, TooLarge

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


class Ineq(NamedTuple):
    """Sparse row ``sum_k coeffs[k] * d[indices[k]] >= rhs``."""

    indices: np.ndarray
    coeffs: np.ndarray
    rhs: float


@dataclass(frozen=True, eq=False)
class LinearProgram:
    n: int
    objective: np.ndarray
    lower_bounds: np.ndarray
    ineqs: tuple = ()

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=np.float64).reshape(-1)
        lb = np.asarray(self.lower_bounds, dtype=np.float64).reshape(-1)
        if len(obj) != self.n or len(lb) != self.n:
            raise ValueError("objective and lower_bounds must have length n")
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(lb))):
            raise ValueError("objective and lower bounds must be finite")
        rows = []
        for row in self.ineqs:
            idx = np.asarray(row[0], dtype=np.int64).reshape(-1)
            val = np.asarray(row[1], dtype=np.float64).reshape(-1)
            rhs = float(row[2])
            if len(idx) != len(val):
                raise ValueError("indices and coeffs differ in length")
            if len(idx) and (idx.min() < 0 or idx.max() >= self.n):
                raise ValueError("inequality index out of range")
            if len(np.unique(idx)) != len(idx):
                raise ValueError("duplicate index within an inequality row")
            if not (np.all(np.isfinite(val)) and np.isfinite(rhs)):
                raise ValueError("inequality coefficients must be finite")
            rows.append(Ineq(idx, val, rhs))
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "lower_bounds", lb)
        object.__setattr__(self, "ineqs", tuple(rows))

    @classmethod
    def from_dense(cls, objective, lower_bounds, matrix, rhs) -> LinearProgram:
        matrix = np.asarray(matrix, dtype=np.float64).reshape(-1, len(objective))
        rows = []
        for a, r in zip(matrix, np.asarray(rhs, dtype=np.float64).reshape(-1)):
            nz = np.flatnonzero(a)
            rows.append((nz, a[nz], r))
        return cls(len(objective), objective, lower_bounds, tuple(rows))

    @classmethod
    def from_padded(cls, objective, lower_bounds, indices, coeffs, rhs) -> LinearProgram:
        """Build from fixed-width row arrays ``indices``/``coeffs`` of shape ``(m, k)``.

        Validation is vectorised, which matters for the thousands of rows a
        pushing step produces.
        """
        objective = np.asarray(objective, dtype=np.float64)
        n = len(objective)
        idx = np.asarray(indices, dtype=np.int64).reshape(len(rhs), -1)
        val = np.asarray(coeffs, dtype=np.float64).reshape(idx.shape)
        rhs = np.asarray(rhs, dtype=np.float64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("inequality index out of range")
        srt = np.sort(idx, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise ValueError("duplicate index within an inequality row")
        if not (np.all(np.isfinite(val)) and np.all(np.isfinite(rhs))):
            raise ValueError("inequality coefficients must be finite")
        lp = cls(n, objective, lower_bounds)
        object.__setattr__(lp, "ineqs", tuple(Ineq(i, v, r) for i, v, r in zip(idx, val, rhs.tolist())))
        rows = np.repeat(np.arange(len(rhs)), idx.shape[1])
        lp.__dict__["csr"] = sparse.csr_matrix((val.ravel(), (rows, idx.ravel())), shape=(len(rhs), n))
        lp.__dict__["rhs"] = rhs
        return lp

    @property
    def n_ineqs(self) -> int:
        return len(self.ineqs)

    @cached_property
    def csr(self) -> sparse.csr_matrix:
        """Sparse ``(m, n)`` inequality matrix."""
        m = len(self.ineqs)
        if not m:
            return sparse.csr_matrix((0, self.n))
        rows = np.concatenate([np.full(len(r.indices), i) for i, r in enumerate(self.ineqs)])
        cols = np.concatenate([r.indices for r in self.ineqs])
        vals = np.concatenate([r.coeffs for r in self.ineqs])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(m, self.n))

    @property
    def matrix(self) -> np.ndarray:
        """Dense ``(m, n)`` inequality matrix."""
        return self.csr.toarray()

    @cached_property
    def rhs(self) -> np.ndarray:
        return np.array([row.rhs for row in self.ineqs], dtype=np.float64)

    def constraint_row(self, ident) -> tuple[np.ndarray, float]:
        """Dense coefficient row and rhs for an active-set identifier."""
        kind, k = ident
        if kind == "bound":
            e = np.zeros(self.n)
            e[k] = 1.0
            return e, float(self.lower_bounds[k])
        row = self.ineqs[k]
        a = np.zeros(self.n)
        a[row.indices] = row.coeffs
        return a, float(row.rhs)

    def active_system(self, active_set) -> tuple[np.ndarray, np.ndarray]:
        rows = [self.constraint_row(ident) for ident in active_set]
        if not rows:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.array([r for r, _ in rows]), np.array([b for _, b in rows])

    def activity_tol(self, ident) -> float:
        _, b = self.constraint_row(ident)
        return 1e-7 * max(1.0, abs(b))

    def residuals(self, d) -> tuple[np.ndarray, np.ndarray]:
        """``(d - lower_bounds, A d - rhs)``; feasibility means both are non-negative."""
        d = np.asarray(d, dtype=np.float64)
        ineq = self.csr @ d - self.rhs if self.ineqs else np.zeros(0)
        return d - self.lower_bounds, ineq


@dataclass(frozen=True, eq=False)
class LpSolution:
    d: np.ndarray | None
    status: LpStatus
    active_set: tuple = ()
    objective_value: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


# --- revised simplex -------------------------------------------------------------

class _Limit(Exception):
    pass


class _RevisedSimplex:
    """Revised simplex for ``min cost.z  s.t.  M z = rhs, z >= 0`` on the dual problem.

    ``M = D [A^T | I | artificials]`` with ``D`` flipping rows where the primal
    objective is negative (so that ``rhs = |c| >= 0``). Columns are ordered
    ``y`` (one per inequality row), ``s`` (one per variable), artificials.
    The basis inverse is kept explicitly, updated by elementary row
    operations and refactorised every ``REFACTOR_EVERY`` pivots.
    """

    REFACTOR_EVERY = 64

    def __init__(self, a_csr, c, budget, pricing):
        self.a = a_csr
        self.m, self.n = a_csr.shape
        self.sign = np.where(c < 0, -1.0, 1.0)
        self.rhs = np.abs(c)
        self.art_rows = np.flatnonzero(c < 0)
        self.n_art = len(self.art_rows)
        m, n = self.m, self.n
        self.basis = [m + j for j in range(n)]
        for q, j in enumerate(self.art_rows):
            self.basis[j] = m + n + q
        self.binv = np.eye(n)
        self.xb = self.rhs.copy()
        self.budget = budget
        self.pricing = pricing
        self.pivots = 0

    def column(self, q):
        m, n = self.m, self.n
        col = np.zeros(n)
        if q < m:
            lo, hi = self.a.indptr[q], self.a.indptr[q + 1]
            idx = self.a.indices[lo:hi]
            col[idx] = self.sign[idx] * self.a.data[lo:hi]
        elif q < m + n:
            col[q - m] = self.sign[q - m]
        else:
            col[self.art_rows[q - m - n]] = 1.0
        return col

    def reduced_costs(self, cost, with_art):
        pi = cost[self.basis] @ self.binv
        sigma = self.sign * pi
        m, n = self.m, self.n
        parts = [cost[:m] - self.a @ sigma, cost[m:m + n] - sigma]
        if with_art:
            parts.append(cost[m + n:] - pi[self.art_rows])
        return np.concatenate(parts)

    def refactor(self):
        b = np.column_stack([self.column(q) for q in self.basis])
        self.binv = np.linalg.inv(b)
        self.xb = self.binv @ self.rhs

    def pivot(self, r, q, alpha):
        piv = alpha[r]
        self.binv[r] /= piv
        self.xb[r] /= piv
        other = alpha.copy()
        other[r] = 0.0
        nz = np.flatnonzero(other)
        if len(nz):
            self.binv[nz] -= np.outer(other[nz], self.binv[r])
            self.xb[nz] -= other[nz] * self.xb[r]
        self.basis[r] = q
        self.pivots += 1
        if self.pivots % self.REFACTOR_EVERY == 0:
            self.refactor()

    def run(self, cost, with_art) -> str:
        scale = max(1.0, float(np.abs(cost).max(initial=0.0)))
        rc_tol = 1e-11 * scale
        bland = self.pricing == "bland"
        while True:
            rc = self.reduced_costs(cost, with_art)
            if bland:
                cand = np.flatnonzero(rc < -rc_tol)
                if not len(cand):
                    return "optimal"
                q = int(cand[0])
            else:
                q = int(np.argmin(rc))
                if not rc[q] < -rc_tol:
                    return "optimal"
            if self.pivots >= self.budget:
                raise _Limit
            alpha = self.binv @ self.column(q)
            rows = np.flatnonzero(alpha > PIVOT_TOL)
            if not len(rows):
                return "unbounded"
            ratios = np.maximum(self.xb[rows], 0.0) / alpha[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
            r = int(min(tied, key=lambda i: self.basis[i]))
            self.pivot(r, q, alpha)
            if self.pricing == "dantzig":
                # Bland's rule for as long as pivots stay degenerate (prevents cycling)
                bland = best <= 1e-12
        # unreachable

    def drive_out_artificials(self):
        m, n = self.m, self.n
        for r in range(n):
            if self.basis[r] < m + n:
                continue
            rho = self.binv[r]
            row = np.concatenate([self.a @ (self.sign * rho), self.sign * rho])
            # [A^T | I] has full row rank, so a replacement column always exists
            q = int(np.flatnonzero(np.abs(row) > PIVOT_TOL)[0])
            self.pivot(r, q, self.binv @ self.column(q))


def _solve_dual(a_csr, b, c, budget, pricing):
    """Solve ``max b.y  s.t.  A^T y <= c, y >= 0``; returns ``(status, basis, pivots)`` for the dual."""
    m, n = a_csr.shape
    sx = _RevisedSimplex(a_csr, c, budget, pricing)
    if sx.n_art:
        cost1 = np.zeros(m + n + sx.n_art)
        cost1[m + n:] = 1.0
        sx.run(cost1, with_art=True)
        if sx.xb[[k for k, q in enumerate(sx.basis) if q >= m + n]].sum() > FEAS_TOL * max(1.0, float(np.abs(c).max())):
            return "infeasible", None, sx.pivots
        sx.drive_out_artificials()
    cost = np.concatenate([-b, np.zeros(n)])
    status = sx.run(cost, with_art=False)
    return status, sx.basis, sx.pivots


PRICING_RULES = ("bland", "dantzig")


def solve_lp(lp: LinearProgram, max_iterations: int | None = None, pricing: str = "bland") -> LpSolution:
    """Solve ``lp``; infeasible/unbounded/iteration-capped outcomes are returned as statuses.

    ``pricing="bland"`` picks the lowest-index improving column every pivot.
    ``"dantzig"`` picks the most negative reduced cost but falls back to
    Bland's rule while pivots are degenerate, which keeps it cycle-free and
    usually needs far fewer pivots on large pushing problems.
    """
    if pricing not in PRICING_RULES:
        raise ValueError(f"pricing must be one of {PRICING_RULES}")
    n, m = lp.n, lp.n_ineqs
    a = lp.csr
    b = lp.rhs - a @ lp.lower_bounds if m else np.zeros(0)
    c = lp.objective
    budget = max_iterations if max_iterations is not None else 50 * (n + m)
    try:
        status, basis, pivots = _solve_dual(a, b, c, budget, pricing)
        if status == "infeasible":
            # dual infeasible: primal is unbounded if it is feasible at all
            feas, _, more = _solve_dual(a, b, np.zeros(n), budget, pricing)
            pivots += more
            primal = LpStatus.INFEASIBLE if feas == "unbounded" else LpStatus.UNBOUNDED
            return LpSolution(None, primal, iterations=pivots)
    except _Limit:
        return LpSolution(None, LpStatus.ITERATION_LIMIT, iterations=budget)
    if status == "unbounded":
        return LpSolution(None, LpStatus.INFEASIBLE, iterations=pivots)

    # bounds first, then rows, each in index order
    active = tuple(sorted(
        (("ineq", q) if q < m else ("bound", q - m) for q in basis),
        key=lambda t: (t[0] != "bound", t[1]),
    ))
    mat, rhs = lp.active_system(active)
    d = np.linalg.solve(mat, rhs)
    return LpSolution(d, LpStatus.OPTIMAL, active, float(c @ d), pivots)


# --- brute-force oracle ------------------------------------------------------------

def _all_constraints(lp: LinearProgram):
    rows = [("bound", j) for j in range(lp.n)] + [("ineq", i) for i in range(lp.n_ineqs)]
    return rows, *lp.active_system(rows)


def _vertices(mat, rhs, n, extra=None):
    """Yield ``(subset, point)`` for every nonsingular ``n``-subset system (plus optional fixed rows)."""
    k = n - (0 if extra is None else len(extra[0]))
    for subset in itertools.combinations(range(len(mat)), k):
        sys_a = mat[list(subset)]
        sys_b = rhs[list(subset)]
        if extra is not None:
            sys_a = np.vstack([sys_a, extra[0]])
            sys_b = np.concatenate([sys_b, extra[1]])
        if abs(np.linalg.det(sys_a)) < 1e-12:
            continue
        yield subset, np.linalg.solve(sys_a, sys_b)


def enumerate_vertices_bruteforce(lp: LinearProgram) -> LpSolution:
    """Exact LP solution by enumerating every basic solution (test oracle; small problems only).

    Because ``d >= lower_bounds`` the feasible set has no lines, so it is
    empty iff it has no vertex and the objective is unbounded iff some
    extreme ray of the recession cone ``{r >= 0, A r >= 0}`` descends.
    """
    if lp.n > 8 or lp.n + lp.n_ineqs > 16:
        raise TooLarge(f"brute force limited to n <= 8 and 16 constraints (n={lp.n}, m={lp.n_ineqs})")
    idents, mat, rhs = _all_constraints(lp)
    n = lp.n
    best = None
    for subset, x in _vertices(mat, rhs, n):
        if np.all(mat @ x - rhs >= -FEAS_TOL * np.maximum(1.0, np.abs(rhs))):
            val = float(lp.objective @ x)
            if best is None or val < best[0] - 1e-12:
                best = (val, subset, x)
    if best is None:
        return LpSolution(None, LpStatus.INFEASIBLE)

    # extreme rays of the recession cone, normalised by sum(r) = 1
    for _, r in _vertices(mat, np.zeros(len(mat)), n, (np.ones((1, n)), np.ones(1))):
        if np.all(mat @ r >= -FEAS_TOL) and lp.objective @ r < -1e-9:
            return LpSolution(None, LpStatus.UNBOUNDED)

    val, subset, x = best
    return LpSolution(x, LpStatus.OPTIMAL, tuple(idents[i] for i in subset), val)


# --- backward --------------------------------------------------------------------------

class LpGradient(NamedTuple):
    rhs: np.ndarray  # (m,) zero for inactive rows
    lower_bounds: np.ndarray  # (n,) zero for inactive bounds
    coeffs: tuple  # per row, aligned with Ineq.indices
    active_rhs: np.ndarray  # gradient wrt the rhs of each active constraint, in active_set order
    condition_number: float


def lp_backward(lp: LinearProgram, solution: LpSolution, upstream) -> LpGradient:
    """Vector-Jacobian product of the optimal ``d`` through the active constraint system.

    With ``A d = b`` the square system of active constraints,
    ``dL/db = A^-T g`` and ``dL/dA = -(A^-T g) d^T``.
    """
    if not solution.optimal:
        raise ValueError(f"backward needs an optimal solution, got {solution.status.value}")
    g = np.asarray(upstream, dtype=np.float64).reshape(lp.n)
    mat, _ = lp.active_system(solution.active_set)
    if mat.shape != (lp.n, lp.n):
        raise SingularActiveSet(f"active set has {len(mat)} members for {lp.n} variables")
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > 1e13:
        raise SingularActiveSet(f"active-set matrix is singular (condition number {cond:.3g})")
    lam = np.linalg.solve(mat.T, g)

    grad_rhs = np.zeros(lp.n_ineqs)
    grad_lb = np.zeros(lp.n)
    for (kind, k), val in zip(solution.active_set, lam):
        if kind == "bound":
            grad_lb[k] = val
        else:
            grad_rhs[k] = val
    coeffs = tuple(-grad_rhs[i] * solution.d[row.indices] for i, row in enumerate(lp.ineqs))
    return LpGradient(grad_rhs, grad_lb, coeffs, lam, cond)
