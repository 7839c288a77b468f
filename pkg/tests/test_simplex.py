import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from warmsched import _pykernels, kernels, milp_model, simplex
from warmsched.simplex import LpProblem, LpStatus, solve_lp

from conftest import make_instance
from oracles import random_feasible_lp, textbook_lp


def lp(A, senses, b, lb, ub, c):
    return LpProblem(sp.csr_matrix(np.atleast_2d(np.asarray(A, float))), senses, b, lb, ub, c)


def highs(A, senses, b, lb, ub, c):
    A = np.asarray(A, float)
    s = np.array(senses)
    A_ub = np.vstack([A[s == "<="], -A[s == ">="]])
    b_ub = np.concatenate([b[s == "<="], -b[s == ">="]])
    res = linprog(c, A_ub=A_ub if len(A_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A[s == "="] if (s == "=").any() else None,
                  b_eq=b[s == "="] if (s == "=").any() else None,
                  bounds=list(zip(lb, [None if np.isinf(u) else u for u in ub])),
                  method="highs")
    return res


def test_one_dimensional():
    r = solve_lp(lp([[1.0]], ["<="], [4.0], [0.0], [10.0], [-1.0]))
    assert r.status is LpStatus.OPTIMAL
    assert r.x[0] == pytest.approx(4.0, abs=1e-9) and r.objective == pytest.approx(-4.0)


def test_infeasible_pair():
    r = solve_lp(lp([[1.0], [1.0]], [">=", "<="], [2.0, 1.0], [0.0], [np.inf], [1.0]))
    assert r.status is LpStatus.INFEASIBLE


def test_crossed_bounds_infeasible():
    r = solve_lp(lp([[1.0]], ["<="], [4.0], [3.0], [2.0], [1.0]))
    assert r.status is LpStatus.INFEASIBLE


def test_unbounded():
    r = solve_lp(lp([[1.0, -1.0]], ["<="], [1.0], [0.0, 0.0], [np.inf, np.inf], [-1.0, 0.0]))
    assert r.status is LpStatus.UNBOUNDED


def test_iteration_limit():
    rng = np.random.default_rng(0)
    A, s, b, lb, ub, c, _ = random_feasible_lp(rng, 10, 10)
    r = solve_lp(lp(A, s, b, lb, ub, c), max_iters=1)
    assert r.status in (LpStatus.ITERATION_LIMIT, LpStatus.OPTIMAL)


def test_free_variable():
    # min x s.t. x >= -3, x free
    r = solve_lp(lp([[1.0]], [">="], [-3.0], [-np.inf], [np.inf], [1.0]))
    assert r.status is LpStatus.OPTIMAL and r.objective == pytest.approx(-3.0)


def test_textbook_oracle_on_random_lps():
    rng = np.random.default_rng(123)
    for _ in range(30):
        A, s, b, lb, ub, c, _ = random_feasible_lp(rng)
        ours = solve_lp(lp(A, s, b, lb, ub, c))
        ref = textbook_lp(A, s, b, lb, ub, c)
        assert ours.status is LpStatus.OPTIMAL and ref[0] == "optimal"
        assert ours.objective == pytest.approx(ref[2], abs=1e-6, rel=1e-6)


def test_highs_agreement_on_random_lps():
    rng = np.random.default_rng(7)
    for _ in range(60):
        A, s, b, lb, ub, c, _ = random_feasible_lp(rng)
        ours = solve_lp(lp(A, s, b, lb, ub, c))
        ref = highs(A, s, b, lb, ub, c)
        assert ref.status == 0
        assert ours.objective == pytest.approx(ref.fun, abs=1e-6, rel=1e-6)


def test_model_relaxation_matches_textbook():
    inst = make_instance([(0, 0), (50, 50)], [1.0, 2.0],
                         [(10, 0, 0, 200), (0, 10, 0, 200)], [[5, 6], [7, 8]])
    from warmsched.motion import build_roadmap, travel_times
    tt = travel_times(inst, build_roadmap(inst, n_samples=0, radius=1e6))
    m = milp_model.build(inst, tt)
    p = simplex.from_model(m)
    A, senses, rhs = m.matrix()
    ours = solve_lp(p)
    ref = textbook_lp(A, senses, rhs, m.lb, m.ub, m.objective)
    assert ours.objective == pytest.approx(ref[2], abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_optimal_results_are_feasible_and_weakly_dual(seed):
    rng = np.random.default_rng(seed)
    A, s, b, lb, ub, c, x0 = random_feasible_lp(rng)
    r = solve_lp(lp(A, s, b, lb, ub, c))
    assert r.status is LpStatus.OPTIMAL
    act = A @ r.x
    sa = np.array(s)
    viol = np.concatenate([(act - b)[sa == "<="], (b - act)[sa == ">="],
                           np.abs(act - b)[sa == "="]])
    assert viol.max(initial=0) <= 1e-6
    assert np.all(r.x >= lb - 1e-9) and np.all(r.x <= ub + 1e-9)
    assert c @ x0 >= r.objective - 1e-6


def test_deterministic_and_backend_identical():
    rng = np.random.default_rng(5)
    for _ in range(10):
        p = lp(*random_feasible_lp(rng)[:6])
        a = solve_lp(p, backend=_pykernels)
        b = solve_lp(p, backend=kernels)
        c = solve_lp(p, backend=kernels)
        assert a.iterations == b.iterations == c.iterations
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(b.x, c.x)


def test_degenerate_problem_terminates():
    # many redundant constraints through the optimum vertex
    n = 4
    rows = [np.eye(n)[i] for i in range(n)] + [np.ones(n)] * 6
    A = np.array(rows)
    b = np.concatenate([np.ones(n), np.full(6, n)])
    r = solve_lp(lp(A, ["<="] * len(A), b, np.zeros(n), np.full(n, np.inf), -np.ones(n)))
    assert r.status is LpStatus.OPTIMAL and r.objective == pytest.approx(-n)


def test_shape_validation():
    with pytest.raises(ValueError):
        lp([[1.0, 2.0]], ["<="], [1.0], [0.0], [1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        lp([[1.0]], ["<"], [1.0], [0.0], [1.0], [1.0])
