"""Earliest-deadline-first warm-start generators.

Both heuristics walk tasks in deadline order and append each one to the agent
that would finish it earliest, given that agent's current tail (last task and
its finish time). Ties go to the lowest index. ``edf`` ignores precedence;
``constraint_aware_edf`` only considers tasks whose predecessors are already
placed and includes predecessor finish + wait in the finish estimate.
"""

from __future__ import annotations

import numpy as np

from .instance import Instance
from .motion import TravelTimes
from .schedule import CandidateSchedule


def _best_agent(inst, tt, k, tail_task, tail_time, ready_time):
    best_i, best_f = -1, np.inf
    s_k = inst.tasks[k].window_start
    for i in range(inst.n_agents):
        j = tail_task[i]
        arrive = tt.from_start[i, k] if j < 0 else tail_time[i] + tt.between_tasks[i, j, k]
        finish = max(arrive, s_k, ready_time) + inst.durations[i, k]
        if finish < best_f:
            best_i, best_f = i, finish
    return best_i, best_f


def edf(inst: Instance, tt: TravelTimes) -> CandidateSchedule:
    order = sorted(range(inst.n_tasks), key=lambda k: (inst.tasks[k].window_end, k))
    return _greedy(inst, tt, order_fn=lambda placed: order[len(placed)], use_precedence=False)


def constraint_aware_edf(inst: Instance, tt: TravelTimes) -> CandidateSchedule:
    O = inst.precedence
    preds = [np.flatnonzero(O[:, k]).tolist() for k in range(inst.n_tasks)]
    deadline = [t.window_end for t in inst.tasks]

    def next_task(placed):
        ready = [k for k in range(inst.n_tasks)
                 if k not in placed and all(j in placed for j in preds[k])]
        if not ready:
            raise ValueError("precedence graph has a cycle")
        return min(ready, key=lambda k: (deadline[k], k))

    return _greedy(inst, tt, order_fn=next_task, use_precedence=True)


def _greedy(inst, tt, order_fn, use_precedence: bool) -> CandidateSchedule:
    na, nt = inst.n_agents, inst.n_tasks
    tail_task = [-1] * na
    tail_time = [0.0] * na
    finish = {}
    orders: list[list[int]] = [[] for _ in range(na)]
    while len(finish) < nt:
        k = order_fn(finish)
        ready_time = 0.0
        if use_precedence:
            for j in np.flatnonzero(inst.precedence[:, k]):
                ready_time = max(ready_time, finish[int(j)] + inst.wait[j, k])
        i, f = _best_agent(inst, tt, k, tail_task, tail_time, ready_time)
        orders[i].append(k)
        tail_task[i], tail_time[i] = k, f
        finish[k] = f
    return CandidateSchedule.from_orders(orders, nt)
