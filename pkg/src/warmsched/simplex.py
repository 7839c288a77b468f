"""Two-phase bounded-variable primal simplex on a dense tableau.

Setup, scaling and result extraction live here; the pivoting loop is
``kernels.simplex_loop`` (compiled when available).

Conventions: minimization; rows ``a x (<=|>=|=) b``; bounds ``lb <= x <= ub``
with ``ub`` possibly ``+inf`` and ``lb`` possibly ``-inf``. Rows and columns
are equilibrated by powers of two before solving, so unscaling is exact.
Fixed columns (``lb == ub``) are substituted into the right-hand side.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import kernels
from ._pykernels import AT_LOWER, AT_UPPER, BASIC, FREE

LE, GE, EQ = "<=", ">=", "="


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


class NumericalSingularity(ArithmeticError):
    pass


@dataclass
class LpProblem:
    A: sp.csr_matrix
    senses: list[str]
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        m, n = self.A.shape
        if len(self.senses) != m or self.rhs.shape != (m,):
            raise ValueError("row count mismatch between A, senses and rhs")
        if self.lb.shape != (n,) or self.ub.shape != (n,) or self.c.shape != (n,):
            raise ValueError("column count mismatch between A, bounds and c")
        if any(s not in (LE, GE, EQ) for s in self.senses):
            raise ValueError("senses must be '<=', '>=' or '='")
        self.sense_codes = np.array([{LE: 1.0, GE: -1.0, EQ: 0.0}[s] for s in self.senses])
        self.dense = self.A.toarray()

    def with_bounds(self, lb, ub) -> "LpProblem":
        """Shallow copy sharing the matrix, with new variable bounds."""
        q = copy.copy(self)
        q.lb = np.asarray(lb, dtype=float)
        q.ub = np.asarray(ub, dtype=float)
        return q

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int


def _pow2_scale(v: np.ndarray) -> np.ndarray:
    out = np.ones_like(v)
    nz = v > 0
    out[nz] = np.exp2(-np.round(np.log2(v[nz])))
    return out


def solve_lp(p: LpProblem, tol: float = 1e-6, max_iters: int | None = None,
             scale: bool = True, backend=None, ptol: float = 1e-9,
             stall_limit: int = 50) -> LpResult:
    """Solve ``p``; ``backend`` overrides the kernel module (for benchmarking)."""
    loop = (backend or kernels).simplex_loop
    lb, ub = p.lb.copy(), p.ub.copy()
    if (lb > ub).any():
        return LpResult(LpStatus.INFEASIBLE, None, np.nan, 0)
    A = p.dense
    b = p.rhs.copy()
    c = p.c.copy()
    m, n = A.shape

    # fixed columns move to the right-hand side
    fixed = lb == ub
    keep = np.flatnonzero(~fixed)
    if fixed.any():
        b = b - A[:, fixed] @ lb[fixed]
    A = A[:, keep]
    lbk, ubk, ck = lb[keep], ub[keep], c[keep]
    nk = len(keep)

    if scale and A.size:
        rs = _pow2_scale(np.abs(A).max(axis=1))
        A = A * rs[:, None]
        b = b * rs
        cs = _pow2_scale(np.abs(A).max(axis=0))
        A = A * cs[None, :]
        lbk = lbk / cs
        ubk = ubk / cs
        ck = ck * cs
    else:
        cs = np.ones(nk)

    # nonbasic starting values
    state_s = np.where(np.isfinite(lbk), AT_LOWER, np.where(np.isfinite(ubk), AT_UPPER, FREE))
    x0 = np.where(state_s == AT_LOWER, lbk, np.where(state_s == AT_UPPER, ubk, 0.0))
    x0 = np.where(np.isfinite(x0), x0, 0.0)
    res = b - A @ x0

    # slack columns, then artificials where the slack cannot start basic
    code = p.sense_codes  # +1 for <=, -1 for >=, 0 for =
    slack_rows = np.flatnonzero(code != 0)
    n_slack = len(slack_rows)
    slack_ok = (code != 0) & (code * res >= 0)
    art_rows = np.flatnonzero(~slack_ok)
    n_art = len(art_rows)
    sign = np.where(slack_ok, code, np.where(res >= 0, 1.0, -1.0))
    ntot = nk + n_slack + n_art
    T = np.zeros((m, ntot))
    T[:, :nk] = A
    slack_cols = nk + np.arange(n_slack)
    T[slack_rows, slack_cols] = code[slack_rows]
    art_cols = nk + n_slack + np.arange(n_art)
    T[art_rows, art_cols] = sign[art_rows]
    T *= sign[:, None]
    xB = sign * res
    basis = np.empty(m, dtype=np.int64)
    slack_col_of_row = np.full(m, -1, dtype=np.int64)
    slack_col_of_row[slack_rows] = slack_cols
    basis[slack_ok] = slack_col_of_row[slack_ok]
    basis[art_rows] = art_cols
    lb_all = np.concatenate([lbk, np.zeros(n_slack + n_art)])
    ub_all = np.concatenate([ubk, np.full(n_slack + n_art, np.inf)])
    state = np.concatenate([state_s, np.zeros(n_slack + n_art, dtype=np.int64)]).astype(np.int8)
    state[basis] = BASIC
    if max_iters is None:
        max_iters = 50 * (m + ntot) + 1000

    iters = 0
    if n_art:
        cost1 = np.zeros(ntot)
        cost1[nk + n_slack:] = 1.0
        dj = cost1 - cost1[basis] @ T
        status, iters = loop(T, dj, xB, basis, state, lb_all, ub_all, tol * 1e-3, ptol,
                             max_iters, stall_limit, 0)
        if status == 2:
            return LpResult(LpStatus.ITERATION_LIMIT, None, np.nan, iters)
        infeas = float(xB[basis >= nk + n_slack].sum())
        if infeas > tol:
            return LpResult(LpStatus.INFEASIBLE, None, np.nan, iters)
        # artificials are pinned at zero for phase 2
        ub_all[nk + n_slack:] = 0.0

    cost = np.zeros(ntot)
    cost[:nk] = ck
    dj = cost - cost[basis] @ T
    status, iters = loop(T, dj, xB, basis, state, lb_all, ub_all, tol * 1e-3, ptol,
                         max_iters, stall_limit, iters)
    if status == 1:
        return LpResult(LpStatus.UNBOUNDED, None, np.nan, iters)
    if status == 2:
        return LpResult(LpStatus.ITERATION_LIMIT, None, np.nan, iters)

    xs = np.where(state == AT_LOWER, lb_all, np.where(state == AT_UPPER, ub_all, 0.0))
    xs[basis] = xB
    xk = xs[:nk] * cs
    x = lb.copy()
    x[keep] = xk
    x = np.clip(x, p.lb, p.ub)
    resid = _max_residual(p, x)
    if not np.isfinite(resid) or resid > tol * max(1.0, np.abs(p.rhs).max(initial=0.0)):
        raise NumericalSingularity(f"basis residual {resid:.3g} exceeds tolerance")
    return LpResult(LpStatus.OPTIMAL, x, float(p.c @ x), iters)


def _max_residual(p: LpProblem, x: np.ndarray) -> float:
    gap = p.A @ x - p.rhs
    code = p.sense_codes
    viol = np.where(code > 0, gap, np.where(code < 0, -gap, np.abs(gap)))
    return float(viol.max(initial=0.0))


def from_model(model, lb=None, ub=None) -> LpProblem:
    """LP relaxation of a :class:`~warmsched.milp_model.MilpModel`."""
    A, senses, rhs = model.matrix()
    return LpProblem(sp.csr_matrix(A), senses, rhs,
                     model.lb if lb is None else lb, model.ub if ub is None else ub,
                     model.objective)
