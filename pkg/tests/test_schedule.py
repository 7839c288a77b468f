import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warmsched import milp_model
from warmsched.instance import GenConfig, generate
from warmsched.motion import compute_travel_times
from warmsched.schedule import (CandidateSchedule, TimedSchedule, check_constraints,
                                quality_score, r_score, read_schedule_orders, simulate,
                                write_schedule)

from conftest import make_instance


def free_tt(inst):
    from warmsched.motion import build_roadmap, travel_times
    return travel_times(inst, build_roadmap(inst, n_samples=0, radius=1e6))


def timed(n_tasks, n_feasible, makespan, horizon):
    cand = CandidateSchedule.from_orders([list(range(n_tasks))], n_tasks)
    z = np.zeros(n_tasks)
    feas = np.arange(n_tasks) < n_feasible
    return TimedSchedule(cand, z, z, z, feas, makespan, horizon)


def test_single_task_recurrence():
    inst = make_instance([(0, 0)], [1.0], [(5, 0, 0, 100)], [[10]])
    ts = simulate(inst, free_tt(inst), CandidateSchedule.from_orders([[0]], 1))
    assert (ts.arrival[0], ts.start[0], ts.finish[0]) == (5.0, 5.0, 15.0)
    assert ts.all_feasible and ts.makespan == 15.0


def test_precedence_wait_recurrence():
    # 0 at distance 5, 1 at distance 1 beyond it; W01 = 3, s_1 = 0
    inst = make_instance([(0, 0)], [1.0], [(5, 0, 0, 100), (6, 0, 0, 100)], [[4, 2]],
                         precedence=[[0, 1], [0, 0]], wait=[[0, 3], [0, 0]])
    ts = simulate(inst, free_tt(inst), CandidateSchedule.from_orders([[0, 1]], 2))
    # t^F_0 = 9, arrival_1 = 10, start_1 = max(10, 0, 9 + 3) = 12
    assert ts.finish[0] == 9.0 and ts.arrival[1] == 10.0
    assert ts.start[1] == max(ts.arrival[1], 0.0, ts.finish[0] + 3.0) == 12.0
    assert ts.finish[1] == 14.0


def test_cross_constraint_deadlock():
    inst = make_instance([(0, 0)], [1.0], [(5, 0, 0, 100), (6, 0, 0, 100)], [[4, 2]],
                         precedence=[[0, 1], [0, 0]])
    ts = simulate(inst, free_tt(inst), CandidateSchedule.from_orders([[1, 0]], 2))
    assert not ts.feasible.any()
    assert np.isinf(ts.finish).all() and np.isinf(ts.makespan)
    assert quality_score(ts) == 0.0


def test_r_score_examples():
    assert r_score(timed(20, 20, 50.0, 50.0)) == pytest.approx(20 / 21)
    assert r_score(timed(20, 20, 0.0, 50.0)) == 1.0
    assert r_score(timed(4, 3, 25.0, 50.0)) == 0.7


def test_quality_score_examples():
    assert quality_score(timed(20, 20, 0.0, 10.0)) == 21.0
    assert quality_score(timed(20, 0, 12.0, 10.0)) == 0.0
    assert quality_score(timed(20, 10, 4.0, 10.0)) == pytest.approx(10.6, abs=1e-12)


def test_missed_deadline_reports_c10():
    inst = make_instance([(0, 0)], [1.0], [(5, 0, 0, 12)], [[10]])
    tt = free_tt(inst)
    ts = simulate(inst, tt, CandidateSchedule.from_orders([[0]], 1))
    assert not ts.feasible[0]
    assert [v.constraint for v in check_constraints(inst, tt, ts)] == ["C10"]


def test_overlap_reports_c4():
    inst = make_instance([(0, 0)], [1.0], [(5, 0, 0, 100), (5, 0, 0, 100)], [[10, 10]])
    tt = free_tt(inst)
    ts = simulate(inst, tt, CandidateSchedule.from_orders([[0, 1]], 2))
    assert check_constraints(inst, tt, ts) == []
    bad = ts.replace(arrival=np.array([5.0, 8.0]), start=np.array([5.0, 8.0]),
                     finish=np.array([15.0, 18.0]))
    assert ("C4", (0, 0, 1)) in [(v.constraint, v.where) for v in check_constraints(inst, tt, bad)]


def all_candidates(na, nt):
    for assign in itertools.product(range(na), repeat=nt):
        groups = [[k for k in range(nt) if assign[k] == i] for i in range(na)]
        for orders in itertools.product(*(itertools.permutations(g) for g in groups)):
            yield CandidateSchedule.from_orders(orders, nt)


@pytest.mark.parametrize("seed", range(4))
def test_feasible_simulation_passes_checks_and_model(seed):
    inst = generate(GenConfig(n_agents=2, n_tasks=3), seed)
    tt = compute_travel_times(inst)
    model = milp_model.build(inst, tt)
    n_feasible = 0
    for cand in all_candidates(2, 3):
        ts = simulate(inst, tt, cand)
        assert np.all(ts.arrival <= ts.start) and np.all(ts.start <= ts.finish)
        assert ts.makespan == ts.finish.max()
        if ts.all_feasible:
            n_feasible += 1
            assert check_constraints(inst, tt, ts) == []
            assert model.row_violations(milp_model.schedule_to_vector(model, ts)) == []
        else:
            assert check_constraints(inst, tt, ts) != []
    assert n_feasible > 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 5000), data=st.data())
def test_relaxing_deadlines_is_monotone(seed, data):
    inst = generate(GenConfig(n_agents=2, n_tasks=4, window_tightness=0.9), seed)
    tt = compute_travel_times(inst)
    agent = data.draw(st.lists(st.integers(0, 1), min_size=4, max_size=4))
    orders = [[k for k in range(4) if agent[k] == i] for i in range(2)]
    cand = CandidateSchedule.from_orders(orders, 4)
    delta = data.draw(st.floats(0.1, 100))
    from warmsched.instance import Task
    looser = inst.replace(tasks=[Task(t.id, t.position, t.window_start, t.window_end + delta)
                                 for t in inst.tasks])
    a, b = simulate(inst, tt, cand), simulate(looser, tt, cand)
    assert np.all(b.feasible >= a.feasible)
    np.testing.assert_array_equal(a.finish, b.finish)


@settings(max_examples=200, deadline=None)
@given(nt=st.integers(1, 25), data=st.data())
def test_score_bounds(nt, data):
    feas = np.array(data.draw(st.lists(st.booleans(), min_size=nt, max_size=nt)))
    horizon = data.draw(st.floats(1e-3, 1e4))
    ms = data.draw(st.one_of(st.floats(0, 1e5), st.just(np.inf)))
    cand = CandidateSchedule.from_orders([list(range(nt))], nt)
    z = np.zeros(nt)
    ts = TimedSchedule(cand, z, z, z, feas, ms, horizon)
    assert 0.0 <= r_score(ts) <= 1.0
    assert 0.0 <= quality_score(ts) <= nt + 1


def test_simulate_deterministic_and_idempotent(desk_pair):
    from warmsched.heuristics import constraint_aware_edf
    inst, tt = desk_pair
    cand = constraint_aware_edf(inst, tt)
    a, b = simulate(inst, tt, cand), simulate(inst, tt, cand)
    for f in ("arrival", "start", "finish", "feasible"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    c = simulate(inst, tt, a.candidate)
    np.testing.assert_array_equal(a.finish, c.finish)


def test_invalid_candidate_rejected(small_pair):
    inst, tt = small_pair
    with pytest.raises(ValueError):
        simulate(inst, tt, CandidateSchedule.from_orders([[0, 1], [1, 2]], 3))


def test_schedule_file_round_trip(tmp_path, desk_pair):
    from warmsched.heuristics import edf
    inst, tt = desk_pair
    ts = simulate(inst, tt, edf(inst, tt))
    write_schedule(ts, tmp_path / "s.csv")
    back = read_schedule_orders(tmp_path / "s.csv", inst.n_agents, inst.n_tasks)
    assert back == ts.candidate
