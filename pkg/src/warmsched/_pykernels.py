"""Pure-Python/numpy implementations of the hot kernels.

These are the reference for ``_ckernels.pyx``; both perform the same IEEE
operations in the same order so results are bit-identical across backends.
"""

import numpy as np

# simplex_loop status codes
OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2

# variable states
AT_LOWER = 0
AT_UPPER = 1
BASIC = 2
FREE = 3


def simulate_core(agent_of, prev, first_travel, step_travel, dur, s, e, O, W):
    """Longest-path recurrence over agent-sequence and precedence edges.

    Returns ``(arrival, start, finish, feasible)``. Tasks on or downstream of
    a dependency cycle keep ``inf`` times and ``feasible = 0``.
    """
    n = len(agent_of)
    arrival = np.full(n, np.inf)
    start = np.full(n, np.inf)
    finish = np.full(n, np.inf)
    feasible = np.zeros(n, dtype=np.uint8)
    indeg = [0] * n
    for k in range(n):
        c = 1 if prev[k] >= 0 else 0
        for j in range(n):
            if O[j, k]:
                c += 1
        indeg[k] = c
    done = [False] * n
    for _ in range(n):
        k = -1
        for m in range(n):
            if not done[m] and indeg[m] == 0:
                k = m
                break
        if k < 0:
            break
        done[k] = True
        p = prev[k]
        if p < 0:
            a = first_travel[k]
        else:
            a = finish[p] + step_travel[k]
        t = a
        if s[k] > t:
            t = s[k]
        for j in range(n):
            if O[j, k]:
                r = finish[j] + W[j, k]
                if r > t:
                    t = r
        arrival[k] = a
        start[k] = t
        finish[k] = t + dur[k]
        feasible[k] = 1 if finish[k] <= e[k] else 0
        for m in range(n):
            if O[k, m]:
                indeg[m] -= 1
            if prev[m] == k:
                indeg[m] -= 1
    return arrival, start, finish, feasible


def simplex_loop(T, dj, xB, basis, state, lb, ub, tol, ptol, max_iters,
                 stall_limit, iters_done):
    """Bounded-variable primal simplex iterations on a dense tableau.

    ``T`` is ``B^-1 A`` (m x n), ``dj`` the reduced-cost row, ``xB`` the basic
    values, ``state[j]`` one of AT_LOWER/AT_UPPER/BASIC/FREE. Entering: largest
    bound-compatible reduced-cost violation (lowest index on ties), switching
    to Bland's rule after ``stall_limit`` consecutive degenerate steps.
    Leaving: minimum ratio, lowest variable index on ties. All arrays are
    updated in place. Returns ``(status, iterations)``.
    """
    m, n = T.shape
    it = iters_done
    stall = 0
    bland = False
    while True:
        # entering variable
        q = -1
        best = 0.0
        for j in range(n):
            st = state[j]
            if st == BASIC or lb[j] == ub[j]:
                continue
            d = dj[j]
            if st == AT_LOWER:
                v = -d
            elif st == AT_UPPER:
                v = d
            else:
                v = d if d > 0 else -d
            if v > tol and (v > best or q < 0):
                q = j
                best = v
                if bland:
                    break
        if q < 0:
            return OPTIMAL, it
        if it >= max_iters:
            return ITERATION_LIMIT, it
        sgn = 1.0 if dj[q] < 0 else -1.0

        # ratio test
        theta = np.inf
        if state[q] != FREE:
            theta = ub[q] - lb[q]
        r = -1
        r_var = n
        to_upper = False
        for i in range(m):
            a = T[i, q] * sgn
            bi = basis[i]
            if a > ptol:
                if lb[bi] == -np.inf:
                    continue
                t = (xB[i] - lb[bi]) / a
                up = False
            elif a < -ptol:
                if ub[bi] == np.inf:
                    continue
                t = (ub[bi] - xB[i]) / -a
                up = True
            else:
                continue
            if t < 0.0:
                t = 0.0
            if t < theta or (t == theta and r >= 0 and bi < r_var):
                theta = t
                r = i
                r_var = bi
                to_upper = up
        if theta == np.inf:
            return UNBOUNDED, it
        it += 1
        if theta <= ptol:
            stall += 1
            if stall >= stall_limit:
                bland = True
        else:
            stall = 0
            bland = False

        step = theta * sgn
        col = T[:, q].copy()
        xB -= step * col
        if r < 0:  # bound flip
            state[q] = AT_UPPER if state[q] == AT_LOWER else AT_LOWER
            continue

        if state[q] == AT_LOWER:
            enter_val = lb[q] + step
        elif state[q] == AT_UPPER:
            enter_val = ub[q] + step
        else:
            enter_val = step
        leaving = basis[r]
        state[leaving] = AT_UPPER if to_upper else AT_LOWER
        state[q] = BASIC
        basis[r] = q
        xB[r] = enter_val

        piv = T[r, q]
        T[r] /= piv
        prow = T[r].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= col[nz, None] * prow[None, :]
        f = dj[q]
        if f != 0.0:
            dj -= f * prow
