"""Forward simulation of candidate schedules, constraint checks and scores."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .instance import Instance
from .motion import TravelTimes

CHECK_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class CandidateSchedule:
    """Assignment matrix plus a total order of tasks for every agent."""

    assignment: np.ndarray  # (n_agents, n_tasks) 0/1
    orders: tuple[tuple[int, ...], ...]

    @classmethod
    def from_orders(cls, orders: Sequence[Sequence[int]], n_tasks: int) -> "CandidateSchedule":
        A = np.zeros((len(orders), n_tasks), dtype=np.int8)
        for i, seq in enumerate(orders):
            A[i, list(seq)] = 1
        return cls(A, tuple(tuple(int(k) for k in seq) for seq in orders))

    def __post_init__(self):
        A = np.array(self.assignment, dtype=np.int8, copy=True)
        A.setflags(write=False)
        object.__setattr__(self, "assignment", A)
        object.__setattr__(self, "orders", tuple(tuple(int(k) for k in o) for o in self.orders))

    def problems(self) -> list[str]:
        A = self.assignment
        out = []
        if len(self.orders) != A.shape[0]:
            out.append("orders: one list per agent required")
            return out
        seen: dict[int, int] = {}
        for i, seq in enumerate(self.orders):
            if len(set(seq)) != len(seq):
                out.append(f"orders[{i}]: repeated task")
            for k in seq:
                if not 0 <= k < A.shape[1]:
                    out.append(f"orders[{i}]: task {k} out of range")
                    continue
                if k in seen and seen[k] != i:
                    out.append(f"task {k}: in orders of agents {seen[k]} and {i}")
                seen[k] = i
            if sorted(set(seq)) != np.flatnonzero(A[i]).tolist():
                out.append(f"orders[{i}]: does not match assignment row")
        for k in range(A.shape[1]):
            if A[:, k].sum() != 1:
                out.append(f"task {k}: assigned to {int(A[:, k].sum())} agents")
        return out

    def agent_of(self) -> np.ndarray:
        out = np.full(self.assignment.shape[1], -1, dtype=np.int64)
        for i, seq in enumerate(self.orders):
            for k in seq:
                out[k] = i
        return out

    def key(self) -> tuple:
        """Lexicographic encoding used for deterministic tie-breaks."""
        return (tuple(self.agent_of().tolist()), self.orders)

    def __eq__(self, other):
        if not isinstance(other, CandidateSchedule):
            return NotImplemented
        return self.orders == other.orders and np.array_equal(self.assignment, other.assignment)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TimedSchedule:
    candidate: CandidateSchedule
    arrival: np.ndarray
    start: np.ndarray
    finish: np.ndarray
    feasible: np.ndarray  # bool per task
    makespan: float
    horizon: float

    @property
    def all_feasible(self) -> bool:
        return bool(self.feasible.all())

    def replace(self, **kw) -> "TimedSchedule":
        d = dict(candidate=self.candidate, arrival=self.arrival, start=self.start,
                 finish=self.finish, feasible=self.feasible, makespan=self.makespan,
                 horizon=self.horizon)
        d.update(kw)
        return TimedSchedule(**d)


def _chain_arrays(inst: Instance, tt: TravelTimes, cand: CandidateSchedule):
    nt = inst.n_tasks
    agent_of = cand.agent_of()
    prev = np.full(nt, -1, dtype=np.int64)
    first = np.zeros(nt)
    step = np.zeros(nt)
    dur = np.zeros(nt)
    for i, seq in enumerate(cand.orders):
        for pos, k in enumerate(seq):
            first[k] = tt.from_start[i, k]
            dur[k] = inst.durations[i, k]
            if pos > 0:
                prev[k] = seq[pos - 1]
                step[k] = tt.between_tasks[i, seq[pos - 1], k]
    return agent_of, prev, first, step, dur


def simulate(inst: Instance, tt: TravelTimes, cand: CandidateSchedule,
             backend=None) -> TimedSchedule:
    """Earliest-time forward simulation of ``cand``.

    Every constraint is applied tightly: arrival after the previous task of the
    same agent plus travel (or travel from the start), start at the latest of
    arrival, window start and every predecessor's finish plus wait, finish
    after the assigned agent's duration. Tasks caught in a cycle of
    agent-order and precedence edges get ``inf`` times and are infeasible.
    """
    problems = cand.problems()
    if problems:
        raise ValueError("invalid candidate: " + "; ".join(problems))
    core = (backend or kernels).simulate_core
    agent_of, prev, first, step, dur = _chain_arrays(inst, tt, cand)
    O = np.ascontiguousarray(inst.precedence, dtype=np.int8)
    W = np.ascontiguousarray(inst.wait, dtype=float)
    arrival, start, finish, feas = core(agent_of, prev, first, step, dur,
                                        inst.window_start, inst.window_end, O, W)
    feasible = feas.astype(bool)
    for a in (arrival, start, finish, feasible):
        a.setflags(write=False)
    return TimedSchedule(cand, arrival, start, finish, feasible,
                         float(finish.max()) if len(finish) else 0.0, inst.horizon)


def quality_score(ts: TimedSchedule) -> float:
    """Feasible-task count plus ``1 - t_ms / t_ddl``; the makespan term is clamped to [0, 1]."""
    if ts.horizon <= 0:
        raise ValueError("horizon must be positive")
    term = 1.0 - min(ts.makespan, ts.horizon) / ts.horizon
    return float(np.count_nonzero(ts.feasible)) + min(term, 1.0)


def r_score(ts: TimedSchedule) -> float:
    return quality_score(ts) / (len(ts.feasible) + 1)


class Violation(NamedTuple):
    constraint: str  # "C1" .. "C10"
    where: tuple  # task / agent indices, e.g. (i, j, k) for C4

    def __str__(self):
        return f"{self.constraint} at {self.where}"


def check_constraints(inst: Instance, tt: TravelTimes, ts: TimedSchedule,
                      tol: float = CHECK_TOL) -> list[Violation]:
    """Re-check every MILP constraint on concrete times; ``[]`` iff MILP-feasible."""
    out: list[Violation] = []
    cand = ts.candidate
    A = cand.assignment
    na, nt = inst.n_agents, inst.n_tasks
    if A.shape != (na, nt) or len(cand.orders) != na:
        return [Violation("C1", ())]
    for k in range(nt):
        if A[:, k].sum() != 1:
            out.append(Violation("C1", (k,)))
    for i, seq in enumerate(cand.orders):
        # an order that disagrees with the assignment breaks the S <= A coupling
        if len(set(seq)) != len(seq) or any(A[i, k] != 1 for k in seq):
            out.append(Violation("C2", (i,)))
        if set(np.flatnonzero(A[i]).tolist()) - set(seq):
            out.append(Violation("C3", (i,)))
    tA, tS, tF = ts.arrival, ts.start, ts.finish
    s, e = inst.window_start, inst.window_end

    def bad(lhs, rhs):  # lhs >= rhs - tol, failing also on non-finite values
        return not (np.isfinite(lhs) and np.isfinite(rhs) and lhs >= rhs - tol)

    for i, seq in enumerate(cand.orders):
        for a, j in enumerate(seq):
            for k in seq[a + 1:]:
                if bad(tA[k], tF[j] + tt.between_tasks[i, j, k]):
                    out.append(Violation("C4", (i, j, k)))
        for k in seq:
            if bad(tA[k], tt.from_start[i, k]):
                out.append(Violation("C5", (i, k)))
            if bad(tF[k], tS[k] + inst.durations[i, k]):
                out.append(Violation("C9", (i, k)))
    for k in range(nt):
        if bad(tS[k], tA[k]):
            out.append(Violation("C6", (k,)))
    for j, k in zip(*np.nonzero(inst.precedence)):
        if bad(tS[k], tF[j] + inst.wait[j, k]):
            out.append(Violation("C7", (int(j), int(k))))
    for k in range(nt):
        if bad(tS[k], s[k]):
            out.append(Violation("C8", (k,)))
        if bad(e[k], tF[k]):
            out.append(Violation("C10", (k,)))
    return out


# --------------------------------------------------------------------------
# schedule file


SCHEDULE_HEADER = ["task", "agent", "position", "arrival", "start", "finish", "feasible"]


def write_schedule(ts: TimedSchedule, path) -> None:
    """One CSV row per task, grouped by agent in execution order."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCHEDULE_HEADER)
        for i, seq in enumerate(ts.candidate.orders):
            for pos, k in enumerate(seq):
                w.writerow([k, i, pos, repr(float(ts.arrival[k])), repr(float(ts.start[k])),
                            repr(float(ts.finish[k])), int(ts.feasible[k])])


def read_schedule_orders(path, n_agents: int, n_tasks: int) -> CandidateSchedule:
    rows = list(csv.DictReader(open(Path(path), newline="")))
    orders: list[list[tuple[int, int]]] = [[] for _ in range(n_agents)]
    for r in rows:
        orders[int(r["agent"])].append((int(r["position"]), int(r["task"])))
    return CandidateSchedule.from_orders([[k for _, k in sorted(o)] for o in orders], n_tasks)
