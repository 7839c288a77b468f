"""Matrix form of the allocation-and-scheduling MILP.

Variables, in column order::

    A[i, j]            binary   agent i performs task j
    S[i, j, k], j != k binary   j precedes k on agent i (not necessarily adjacent)
    tA[k], tS[k], tF[k]         arrival / start / finish of task k
    t_ms                        makespan (objective)

Rows follow the constraint families C1..C10. Three departures from the printed
formulation, all deliberate:

* the per-agent duration row (C9) is guarded with ``-M (1 - A[i, k])`` so only
  the assigned agent's duration binds;
* ``S[i,j,k] + S[i,k,j] >= A[i,j] + A[i,k] - 1`` forces an order between two
  tasks on the same agent; without it C4 is vacuous and tasks could overlap;
* window start (C8) and window end (C10) are variable bounds; precedence rows
  (C7) exist only where ``O[j, k] = 1``.

The C2/C3 pair is symmetric in (j, k) and is emitted once per unordered pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .instance import Instance
from .motion import TravelTimes
from .schedule import CandidateSchedule, TimedSchedule

BINARY, CONTINUOUS = "binary", "continuous"
LE, GE, EQ = "<=", ">=", "="


class ObjectiveKind(str, Enum):
    MAKESPAN = "makespan"
    SUM_FINISH = "sum_finish"


class DimensionMismatch(ValueError):
    pass


class NonIntegralSolution(ValueError):
    pass


@dataclass
class MilpModel:
    names: list[str]
    kinds: list[str]
    lb: np.ndarray
    ub: np.ndarray
    rows: list[tuple[dict[int, float], str, float, str]]  # (coefs, sense, rhs, family)
    objective: np.ndarray
    big_m: float
    n_agents: int
    n_tasks: int
    horizon: float
    objective_kind: ObjectiveKind = ObjectiveKind.MAKESPAN
    _s_index: dict = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def a(self, i: int, j: int) -> int:
        return i * self.n_tasks + j

    def s(self, i: int, j: int, k: int) -> int:
        return self._s_index[i, j, k]

    def t_arrival(self, k: int) -> int:
        return self._time0 + k

    def t_start(self, k: int) -> int:
        return self._time0 + self.n_tasks + k

    def t_finish(self, k: int) -> int:
        return self._time0 + 2 * self.n_tasks + k

    @property
    def t_ms(self) -> int:
        return self._time0 + 3 * self.n_tasks

    @property
    def _time0(self) -> int:
        return self.n_agents * self.n_tasks * self.n_tasks

    def binary_indices(self) -> np.ndarray:
        return np.array([v for v, kd in enumerate(self.kinds) if kd == BINARY], dtype=np.int64)

    def matrix(self):
        """Dense ``(A, senses, rhs)`` view of the rows."""
        A = np.zeros((len(self.rows), self.n_vars))
        for r, (coefs, _, _, _) in enumerate(self.rows):
            for v, c in coefs.items():
                A[r, v] = c
        return A, [row[1] for row in self.rows], np.array([row[2] for row in self.rows])

    def row_violations(self, x, tol: float = 1e-6) -> list[tuple[str, int, float]]:
        """(family, row index or -1 for a bound, amount) for every violated row/bound."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise DimensionMismatch(f"vector has shape {x.shape}, model has {self.n_vars} vars")
        out = []
        for v in np.flatnonzero((x < self.lb - tol) | (x > self.ub + tol) | ~np.isfinite(x)):
            out.append(("bound:" + self.names[v], -1, float(x[v])))
        for r, (coefs, sense, rhs, fam) in enumerate(self.rows):
            act = sum(c * x[v] for v, c in coefs.items())
            viol = {LE: act - rhs, GE: rhs - act, EQ: abs(act - rhs)}[sense]
            if not viol <= tol:
                out.append((fam, r, float(viol)))
        return out

    def to_lp_text(self) -> str:
        """CPLEX-LP style text export for cross-checking with external solvers."""

        def term(c, v):
            return f"{'+' if c >= 0 else '-'} {abs(c):.15g} {self.names[v]}"

        lines = ["\\ warmsched MILP", "Minimize", " obj: " + " ".join(
            term(c, v) for v, c in enumerate(self.objective) if c != 0), "Subject To"]
        for r, (coefs, sense, rhs, fam) in enumerate(self.rows):
            body = " ".join(term(c, v) for v, c in sorted(coefs.items()))
            lines.append(f" {fam}_{r}: {body} {sense} {rhs:.15g}")
        lines.append("Bounds")
        for v, name in enumerate(self.names):
            lo, hi = self.lb[v], self.ub[v]
            hi_s = "+inf" if np.isinf(hi) else f"{hi:.15g}"
            lines.append(f" {lo:.15g} <= {name} <= {hi_s}")
        lines.append("Binaries")
        lines.append(" " + " ".join(self.names[v] for v in self.binary_indices()))
        lines.append("End")
        return "\n".join(lines) + "\n"

    def write_lp(self, path) -> None:
        Path(path).write_text(self.to_lp_text())


def big_m(inst: Instance, tt: TravelTimes) -> float:
    """Big-M large enough to deactivate every conditional row.

    Any feasible time is at most ``max_k e_k`` (window ends are upper bounds).
    A conditional row needs ``M >= lhs_time + travel/wait/duration - rhs_time``
    with both times in ``[0, max e]``, so ``max e`` plus the largest single
    duration, travel or wait term suffices; the sums used here dominate that.
    """
    e_max = max(t.window_end for t in inst.tasks)
    dur = float(inst.durations.max(axis=0).sum())
    pool = np.concatenate([tt.from_start.ravel(), tt.between_tasks.ravel()])
    nt = inst.n_tasks
    largest = float(np.sort(pool)[::-1][:nt].sum())
    w_max = float(inst.wait.max()) if inst.wait.size else 0.0
    return float(e_max + dur + largest + float(tt.from_start.max()) + w_max)


def expected_row_count(n_agents: int, n_tasks: int, n_prec: int) -> int:
    pairs = n_tasks * (n_tasks - 1) // 2
    return (n_tasks  # C1
            + 3 * n_agents * pairs  # C2, C3, ordering completeness
            + n_agents * n_tasks * (n_tasks - 1)  # C4
            + n_agents * n_tasks  # C5
            + n_tasks  # C6
            + n_prec  # C7
            + n_agents * n_tasks  # C9
            + n_tasks)  # makespan


def build(inst: Instance, tt: TravelTimes, objective: ObjectiveKind = ObjectiveKind.MAKESPAN,
          M: float | None = None) -> MilpModel:
    na, nt = inst.n_agents, inst.n_tasks
    M = big_m(inst, tt) if M is None else float(M)
    names, kinds, lb, ub = [], [], [], []

    def var(name, kind, lo, hi):
        names.append(name)
        kinds.append(kind)
        lb.append(lo)
        ub.append(hi)
        return len(names) - 1

    for i in range(na):
        for j in range(nt):
            var(f"A_{i}_{j}", BINARY, 0.0, 1.0)
    s_index = {}
    for i in range(na):
        for j in range(nt):
            for k in range(nt):
                if j != k:
                    s_index[i, j, k] = var(f"S_{i}_{j}_{k}", BINARY, 0.0, 1.0)
    s_win = inst.window_start
    e_win = inst.window_end
    for k in range(nt):
        var(f"tA_{k}", CONTINUOUS, 0.0, np.inf)
    for k in range(nt):
        var(f"tS_{k}", CONTINUOUS, float(s_win[k]), np.inf)  # C8
    for k in range(nt):
        var(f"tF_{k}", CONTINUOUS, 0.0, float(e_win[k]))  # C10
    var("t_ms", CONTINUOUS, 0.0, np.inf)

    model = MilpModel(names, kinds, np.array(lb), np.array(ub), [], np.zeros(len(names)), M,
                      na, nt, inst.horizon, ObjectiveKind(objective), s_index)
    rows = model.rows
    A, S = model.a, model.s
    tA, tS, tF = model.t_arrival, model.t_start, model.t_finish

    for j in range(nt):
        rows.append(({A(i, j): 1.0 for i in range(na)}, EQ, 1.0, "C1"))
    for i in range(na):
        for j in range(nt):
            for k in range(j + 1, nt):
                rows.append(({S(i, j, k): 1.0, S(i, k, j): 1.0, A(i, j): -1.0}, LE, 0.0, "C2"))
                rows.append(({S(i, j, k): 1.0, S(i, k, j): 1.0, A(i, k): -1.0}, LE, 0.0, "C3"))
                rows.append(({S(i, j, k): 1.0, S(i, k, j): 1.0, A(i, j): -1.0, A(i, k): -1.0},
                             GE, -1.0, "ORD"))
    for i in range(na):
        for j in range(nt):
            for k in range(nt):
                if j == k:
                    continue
                # tA_k - tF_j - M (A_ij + A_ik + S_ijk) >= tT_ijk - 3M
                rows.append(({tA(k): 1.0, tF(j): -1.0, A(i, j): -M, A(i, k): -M, S(i, j, k): -M},
                             GE, float(tt.between_tasks[i, j, k]) - 3 * M, "C4"))
    for i in range(na):
        for k in range(nt):
            rows.append(({tA(k): 1.0, A(i, k): -M}, GE, float(tt.from_start[i, k]) - M, "C5"))
    for k in range(nt):
        rows.append(({tS(k): 1.0, tA(k): -1.0}, GE, 0.0, "C6"))
    for j, k in zip(*np.nonzero(inst.precedence)):
        rows.append(({tS(int(k)): 1.0, tF(int(j)): -1.0}, GE, float(inst.wait[j, k]), "C7"))
    for i in range(na):
        for k in range(nt):
            rows.append(({tF(k): 1.0, tS(k): -1.0, A(i, k): -M},
                         GE, float(inst.durations[i, k]) - M, "C9"))
    if model.objective_kind is ObjectiveKind.MAKESPAN:
        for k in range(nt):
            rows.append(({model.t_ms: 1.0, tF(k): -1.0}, GE, 0.0, "MS"))
        model.objective[model.t_ms] = 1.0
    else:
        for k in range(nt):
            rows.append(({model.t_ms: 1.0, tF(k): -1.0}, GE, 0.0, "MS"))
            model.objective[tF(k)] = 1.0
    return model


def schedule_to_vector(model: MilpModel, ts: TimedSchedule) -> np.ndarray:
    cand = ts.candidate
    na, nt = model.n_agents, model.n_tasks
    if cand.assignment.shape != (na, nt) or len(ts.start) != nt:
        raise DimensionMismatch(
            f"schedule is {cand.assignment.shape}, model expects ({na}, {nt})")
    problems = cand.problems()
    if problems:
        raise ValueError("invalid candidate: " + "; ".join(problems))
    x = np.zeros(model.n_vars)
    for i in range(na):
        for j in range(nt):
            x[model.a(i, j)] = cand.assignment[i, j]
        seq = cand.orders[i]
        for p, j in enumerate(seq):
            for k in seq[p + 1:]:
                x[model.s(i, j, k)] = 1.0
    for k in range(nt):
        x[model.t_arrival(k)] = ts.arrival[k]
        x[model.t_start(k)] = ts.start[k]
        x[model.t_finish(k)] = ts.finish[k]
    x[model.t_ms] = ts.makespan
    return x


def vector_to_schedule(model: MilpModel, x, inst: Instance | None = None,
                       tol: float = 1e-6) -> TimedSchedule:
    """Rebuild a schedule from a solution vector, ordering each agent's tasks by start time."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_vars,):
        raise DimensionMismatch(f"vector has shape {x.shape}, model has {model.n_vars} vars")
    b = model.binary_indices()
    frac = np.abs(x[b] - np.round(x[b]))
    if (frac > tol).any():
        v = b[int(np.argmax(frac))]
        raise NonIntegralSolution(f"{model.names[v]} = {x[v]!r} is not integral")
    na, nt = model.n_agents, model.n_tasks
    A = np.round(x[: na * nt]).reshape(na, nt).astype(np.int8)
    tA = np.array([x[model.t_arrival(k)] for k in range(nt)])
    tS = np.array([x[model.t_start(k)] for k in range(nt)])
    tF = np.array([x[model.t_finish(k)] for k in range(nt)])
    orders = [sorted(np.flatnonzero(A[i]).tolist(), key=lambda k: (tS[k], k)) for i in range(na)]
    cand = CandidateSchedule(A, tuple(tuple(o) for o in orders))
    if inst is not None:
        e = inst.window_end
        feasible = tF <= e + tol
    else:
        feasible = np.ones(nt, dtype=bool)
    return TimedSchedule(cand, tA, tS, tF, feasible, float(x[model.t_ms]), model.horizon)
