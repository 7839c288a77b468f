import numpy as np
import pytest

from warmsched import bnb, milp_model, simplex
from warmsched.bench import brute_force_optimal
from warmsched.instance import GenConfig, Task, generate
from warmsched.milp_model import DimensionMismatch, NonIntegralSolution, build, big_m
from warmsched.motion import build_roadmap, compute_travel_times, travel_times
from warmsched.schedule import CandidateSchedule, simulate

from conftest import make_instance


def free_tt(inst):
    return travel_times(inst, build_roadmap(inst, n_samples=0, radius=1e6))


def one_task(e=10.0, dur=2.0, dist=3.0):
    inst = make_instance([(0, 0)], [1.0], [(dist, 0, 0, e)], [[dur]])
    return inst, free_tt(inst)


def test_big_m_fixture():
    assert big_m(*one_task()) == 18.0


def test_big_m_zero_travel():
    assert big_m(*one_task(dist=0.0)) == 10.0 + 2.0


def test_big_m_homogeneous():
    inst, tt = generate(GenConfig(n_agents=2, n_tasks=3), 1), None
    tt = compute_travel_times(inst)
    scaled = inst.replace(
        tasks=[Task(t.id, t.position, 10 * t.window_start, 10 * t.window_end) for t in inst.tasks],
        durations=inst.durations * 10, wait=inst.wait * 10)
    assert big_m(scaled, tt.scaled(10.0)) == pytest.approx(10 * big_m(inst, tt), rel=1e-12)


@pytest.mark.parametrize("na,nt", [(1, 1), (2, 2), (2, 3), (3, 6)])
def test_variable_and_row_counts(na, nt):
    inst = generate(GenConfig(n_agents=na, n_tasks=nt), 0)
    m = build(inst, compute_travel_times(inst))
    assert m.n_vars == na * nt + na * nt * (nt - 1) + 3 * nt + 1
    assert len(m.rows) == milp_model.expected_row_count(na, nt, int(inst.precedence.sum()))
    for coefs, _, _, _ in m.rows:
        assert all(0 <= v < m.n_vars for v in coefs)


def test_smallest_model():
    inst, tt = one_task(e=100.0)
    m = build(inst, tt)
    assert m.names == ["A_0_0", "tA_0", "tS_0", "tF_0", "t_ms"]
    res = bnb.solve(m, bnb.SolveOptions(), inst, tt)
    assert res.status is bnb.SolveStatus.OPTIMAL
    assert res.objective == 3.0 + 2.0
    assert res.nodes_explored <= 2


def test_two_by_two_counts():
    inst = make_instance([(0, 0), (5, 5)], [1, 2], [(10, 0, 0, 100), (0, 10, 0, 100)],
                         [[1, 2], [3, 4]])
    m = build(inst, free_tt(inst))
    kinds = np.array(m.kinds)
    assert (np.array([n.startswith("A_") for n in m.names])).sum() == 4
    assert (np.array([n.startswith("S_") for n in m.names])).sum() == 4
    assert (np.array([n.startswith("t") for n in m.names])).sum() == 7
    assert (kinds == milp_model.BINARY).sum() == 8


@pytest.mark.parametrize("seed", range(3))
def test_relaxation_bounds_integer_optimum(seed):
    inst = generate(GenConfig(n_agents=2, n_tasks=3), seed)
    tt = compute_travel_times(inst)
    m = build(inst, tt)
    lp = simplex.solve_lp(simplex.from_model(m))
    assert lp.status is simplex.LpStatus.OPTIMAL
    assert lp.objective <= brute_force_optimal(inst, tt).makespan + 1e-6


def test_missed_deadline_vector_violates_bound():
    inst = make_instance([(0, 0)], [1.0], [(5, 0, 0, 12)], [[10]])
    tt = free_tt(inst)
    m = build(inst, tt)
    ts = simulate(inst, tt, CandidateSchedule.from_orders([[0]], 1))
    viol = m.row_violations(milp_model.schedule_to_vector(m, ts))
    assert [v[0] for v in viol] == ["bound:tF_0"]


def test_dimension_mismatch(small_pair, desk_pair):
    inst, tt = small_pair
    m = build(inst, tt)
    big, btt = desk_pair
    ts = simulate(big, btt, CandidateSchedule.from_orders([[0, 1, 2], [3, 4], [5]], 6))
    with pytest.raises(DimensionMismatch):
        milp_model.schedule_to_vector(m, ts)
    with pytest.raises(DimensionMismatch):
        m.row_violations(np.zeros(3))


def test_empty_assignment_rejected(small_pair):
    inst, tt = small_pair
    m = build(inst, tt)
    cand = CandidateSchedule(np.zeros((2, 3), dtype=np.int8), ((), ()))
    z = np.zeros(3)
    from warmsched.schedule import TimedSchedule
    ts = TimedSchedule(cand, z, z, z, np.ones(3, bool), 0.0, 1.0)
    with pytest.raises(ValueError):
        milp_model.schedule_to_vector(m, ts)


def test_fractional_vector_rejected(small_pair):
    m = build(*small_pair)
    x = np.zeros(m.n_vars)
    x[m.a(0, 0)] = 0.5
    with pytest.raises(NonIntegralSolution):
        milp_model.vector_to_schedule(m, x)


def test_order_from_start_times():
    inst = make_instance([(0, 0)], [1.0], [(10, 0, 0, 100), (20, 0, 0, 100)], [[1, 1]])
    m = build(inst, free_tt(inst))
    x = np.zeros(m.n_vars)
    x[m.a(0, 0)] = x[m.a(0, 1)] = 1
    x[m.t_start(0)], x[m.t_start(1)] = 3.0, 7.0
    assert milp_model.vector_to_schedule(m, x).candidate.orders == ((0, 1),)


@pytest.mark.parametrize("seed", range(3))
def test_round_trip_preserves_binaries(seed):
    inst = generate(GenConfig(n_agents=2, n_tasks=4), seed)
    tt = compute_travel_times(inst)
    m = build(inst, tt)
    res = bnb.solve(m, bnb.SolveOptions(), inst, tt)
    x = milp_model.schedule_to_vector(m, res.schedule)
    back = milp_model.vector_to_schedule(m, x, inst)
    x2 = milp_model.schedule_to_vector(m, back)
    b = m.binary_indices()
    np.testing.assert_array_equal(x[b], x2[b])
    assert m.row_violations(x) == []


@pytest.mark.parametrize("seed", range(3))
def test_larger_m_same_optimum(seed):
    inst = generate(GenConfig(n_agents=2, n_tasks=3), seed)
    tt = compute_travel_times(inst)
    M = big_m(inst, tt)
    a = bnb.solve(build(inst, tt, M=M), bnb.SolveOptions(), inst, tt)
    b = bnb.solve(build(inst, tt, M=10 * M), bnb.SolveOptions(), inst, tt)
    assert a.objective == b.objective


def test_lp_export(tmp_path, small_pair):
    m = build(*small_pair)
    m.write_lp(tmp_path / "m.lp")
    text = (tmp_path / "m.lp").read_text()
    assert text.startswith("\\") and "Subject To" in text and text.rstrip().endswith("End")
    assert text.count("C4_") == 2 * 3 * 2
