"""Independent reference implementations used only by the tests."""

import numpy as np


def textbook_lp(A, senses, b, lb, ub, c, tol=1e-9, max_iter=5000):
    """Plain two-phase tableau simplex with Bland's rule on the standard form.

    Requires finite lower bounds. Returns ("optimal", x, obj), ("infeasible",)
    or ("unbounded",).
    """
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    c = np.asarray(c, float)
    m, n = A.shape
    rows, rhs, kinds = [], [], []
    shift = b - A @ lb
    for r in range(m):
        rows.append(A[r])
        rhs.append(shift[r])
        kinds.append(senses[r])
    for j in range(n):
        if np.isfinite(ub[j]):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            rhs.append(ub[j] - lb[j])
            kinds.append("<=")
    R = len(rows)
    n_slack = sum(k != "=" for k in kinds)
    T = np.zeros((R, n + n_slack + R + 1))
    s = 0
    for r in range(R):
        T[r, :n] = rows[r]
        if kinds[r] != "=":
            T[r, n + s] = 1.0 if kinds[r] == "<=" else -1.0
            s += 1
        T[r, -1] = rhs[r]
        if T[r, -1] < 0:
            T[r] *= -1
        T[r, n + n_slack + r] = 1.0
    art0 = n + n_slack
    basis = list(range(art0, art0 + R))

    def run(cost, allowed):
        z = cost[basis] @ T[:, :-1] - cost
        for _ in range(max_iter):
            enter = next((j for j in allowed if z[j] > tol), None)
            if enter is None:
                return "optimal"
            col = T[:, enter]
            ratios = [(T[r, -1] / col[r], basis[r], r) for r in range(R) if col[r] > tol]
            if not ratios:
                return "unbounded"
            _, _, leave = min(ratios)
            T[leave] /= T[leave, enter]
            for r in range(R):
                if r != leave and T[r, enter] != 0:
                    T[r] -= T[r, enter] * T[leave]
            basis[leave] = enter
            z = cost[basis] @ T[:, :-1] - cost
        raise RuntimeError("iteration limit")

    width = T.shape[1] - 1
    cost1 = np.zeros(width)
    cost1[art0:] = 1.0
    run(cost1, range(width))
    if sum(T[r, -1] for r in range(R) if basis[r] >= art0) > 1e-7:
        return ("infeasible",)
    for r in range(R):  # drive zero-level artificials out of the basis
        if basis[r] >= art0:
            piv = next((j for j in range(art0) if abs(T[r, j]) > 1e-9), None)
            if piv is not None:
                T[r] /= T[r, piv]
                for q in range(R):
                    if q != r and T[q, piv] != 0:
                        T[q] -= T[q, piv] * T[r]
                basis[r] = piv
    cost2 = np.zeros(width)
    cost2[:n] = c
    cost2[art0:] = 0.0
    T[:, art0:-1] = np.where(np.arange(art0, width)[None, :] == np.array(basis)[:, None],
                             T[:, art0:-1], 0.0)
    status = run(cost2, range(art0))
    if status == "unbounded":
        return ("unbounded",)
    y = np.zeros(width)
    for r in range(R):
        y[basis[r]] = T[r, -1]
    x = lb + y[:n]
    return ("optimal", x, float(c @ x))


def random_feasible_lp(rng, m=None, n=None, eq_rows=True):
    """Random LP with a known interior-ish feasible point and finite bounds."""
    m = m or int(rng.integers(2, 12))
    n = n or int(rng.integers(2, 12))
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.7)
    lb = rng.uniform(-5, 0, n)
    ub = lb + rng.uniform(0.5, 10, n)
    x0 = lb + rng.random(n) * (ub - lb)
    act = A @ x0
    senses = list(rng.choice(["<=", ">=", "="] if eq_rows else ["<=", ">="], size=m,
                             p=[0.45, 0.45, 0.1] if eq_rows else [0.5, 0.5]))
    slack = rng.uniform(0, 3, m)
    b = np.where(np.array(senses) == "<=", act + slack,
                 np.where(np.array(senses) == ">=", act - slack, act))
    c = rng.normal(size=n)
    return A, senses, b, lb, ub, c, x0
