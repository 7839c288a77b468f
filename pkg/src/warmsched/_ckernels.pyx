# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Same operations in the same order as the numpy reference; build with
``-ffp-contract=off`` so no fused multiply-add changes the rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

cdef enum:
    AT_LOWER = 0
    AT_UPPER = 1
    BASIC = 2
    FREE = 3


def simulate_core(const cnp.int64_t[::1] agent_of, const cnp.int64_t[::1] prev,
                  const double[::1] first_travel, const double[::1] step_travel,
                  const double[::1] dur, const double[::1] s, const double[::1] e,
                  const cnp.int8_t[:, ::1] O, const double[:, ::1] W):
    cdef Py_ssize_t n = agent_of.shape[0]
    arrival_a = np.full(n, np.inf)
    start_a = np.full(n, np.inf)
    finish_a = np.full(n, np.inf)
    feasible_a = np.zeros(n, dtype=np.uint8)
    cdef double[::1] arrival = arrival_a
    cdef double[::1] start = start_a
    cdef double[::1] finish = finish_a
    cdef cnp.uint8_t[::1] feasible = feasible_a
    indeg_a = np.zeros(n, dtype=np.int64)
    done_a = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] indeg = indeg_a
    cdef cnp.uint8_t[::1] done = done_a
    cdef Py_ssize_t j, k, m, step
    cdef cnp.int64_t p, c
    cdef double a, t, r
    with nogil:
        for k in range(n):
            c = 1 if prev[k] >= 0 else 0
            for j in range(n):
                if O[j, k]:
                    c += 1
            indeg[k] = c
        for step in range(n):
            k = -1
            for m in range(n):
                if not done[m] and indeg[m] == 0:
                    k = m
                    break
            if k < 0:
                break
            done[k] = 1
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
    return arrival_a, start_a, finish_a, feasible_a


def simplex_loop(double[:, ::1] T, double[::1] dj, double[::1] xB,
                 cnp.int64_t[::1] basis, cnp.int8_t[::1] state,
                 const double[::1] lb, const double[::1] ub,
                 double tol, double ptol, long max_iters, long stall_limit,
                 long iters_done):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t n = T.shape[1]
    cdef long it = iters_done
    cdef long stall = 0
    cdef bint bland = False
    cdef Py_ssize_t i, j, q, r
    cdef cnp.int64_t bi, r_var, leaving
    cdef double best, d, v, sgn, theta, a, t, step, enter_val, piv, f
    cdef bint up, to_upper
    cdef int status = -1
    col_a = np.empty(m)
    cdef double[::1] col = col_a
    with nogil:
        while True:
            q = -1
            best = 0.0
            for j in range(n):
                if state[j] == BASIC or lb[j] == ub[j]:
                    continue
                d = dj[j]
                if state[j] == AT_LOWER:
                    v = -d
                elif state[j] == AT_UPPER:
                    v = d
                else:
                    v = d if d > 0 else -d
                if v > tol and (v > best or q < 0):
                    q = j
                    best = v
                    if bland:
                        break
            if q < 0:
                status = 0
                break
            if it >= max_iters:
                status = 2
                break
            sgn = 1.0 if dj[q] < 0 else -1.0

            theta = INFINITY
            if state[q] != FREE:
                theta = ub[q] - lb[q]
            r = -1
            r_var = n
            to_upper = False
            for i in range(m):
                a = T[i, q] * sgn
                bi = basis[i]
                if a > ptol:
                    if lb[bi] == -INFINITY:
                        continue
                    t = (xB[i] - lb[bi]) / a
                    up = False
                elif a < -ptol:
                    if ub[bi] == INFINITY:
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
            if theta == INFINITY:
                status = 1
                break
            it += 1
            if theta <= ptol:
                stall += 1
                if stall >= stall_limit:
                    bland = True
            else:
                stall = 0
                bland = False

            step = theta * sgn
            for i in range(m):
                col[i] = T[i, q]
                xB[i] -= step * col[i]
            if r < 0:
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
            for j in range(n):
                T[r, j] /= piv
            col[r] = 0.0
            for i in range(m):
                f = col[i]
                if f != 0.0:
                    for j in range(n):
                        T[i, j] -= f * T[r, j]
            f = dj[q]
            if f != 0.0:
                for j in range(n):
                    dj[j] -= f * T[r, j]
    return status, it
