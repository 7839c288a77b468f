"""Branch-and-bound over the LP relaxation, with warm-start injection.

Search rules (all deterministic):

* node selection: depth first, deeper and newer first (``"depth_first"``,
  the default), or best bound first, ties by node id (``"best_bound"``);
* branching: most fractional binary, ties by lowest variable index
  (``"most_fractional"``), or the first fractional binary (``"first_fractional"``);
* children are created floor branch first and their LPs are solved eagerly;
  a node is pruned when its bound is ``>= incumbent - gap * |incumbent|``.

Integral LP solutions are turned back into a candidate schedule and
re-simulated; the incumbent value is the simulated makespan, which never
exceeds the LP value.

``nodes_explored`` counts LP relaxations solved, including the root.

Trace lines (``trace=True``) have the form::

    node=<id> depth=<d> bound=<float|inf> action=<branch|prune|infeasible|integral|incumbent>
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import milp_model, simplex
from .instance import Instance
from .milp_model import MilpModel, NonIntegralSolution
from .motion import TravelTimes
from .schedule import (CandidateSchedule, TimedSchedule, Violation, check_constraints,
                       simulate)

log = logging.getLogger(__name__)
INT_TOL = 1e-6


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"  # limit hit with an incumbent
    INFEASIBLE = "infeasible"  # proven, or no incumbent when a limit hit


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    time_limit: float = 600.0
    gap: float = 1e-6
    node_limit: int = 1_000_000
    branching: str = "most_fractional"
    node_selection: str = "depth_first"
    seed: int = 0
    lp_tol: float = 1e-6
    trace: bool = False

    def __post_init__(self):
        if self.time_limit <= 0 or self.node_limit <= 0 or self.gap < 0:
            raise ValueError("time_limit and node_limit must be positive, gap >= 0")
        if self.branching not in ("most_fractional", "first_fractional"):
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.node_selection not in ("best_bound", "depth_first"):
            raise ValueError(f"unknown node selection rule {self.node_selection!r}")


@dataclass
class SolveResult:
    status: SolveStatus
    schedule: Optional[TimedSchedule]
    objective: float
    bound: float
    nodes_explored: int
    lp_iterations_total: int
    search_time: float
    validation_time: float
    warm_start_accepted: bool
    limit_reached: bool = False
    build_time: float = 0.0
    rejection: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def total_time(self) -> float:
        return self.search_time + self.validation_time

    def deterministic_fields(self) -> dict:
        """Everything except wall-clock measurements."""
        sched = self.schedule
        return {
            "status": self.status.value,
            "objective": self.objective,
            "bound": self.bound,
            "nodes_explored": self.nodes_explored,
            "lp_iterations_total": self.lp_iterations_total,
            "warm_start_accepted": self.warm_start_accepted,
            "limit_reached": self.limit_reached,
            "orders": None if sched is None else sched.candidate.orders,
            "rejection": [tuple(v) for v in self.rejection],
            "trace": list(self.trace),
        }


@dataclass
class Incumbent:
    x: np.ndarray
    value: float
    schedule: TimedSchedule


@dataclass
class WarmStart:
    accepted: bool
    incumbent: Optional[Incumbent]
    violations: list[Violation]
    elapsed: float


def inject_warm_start(model: MilpModel, candidate: CandidateSchedule, inst: Instance,
                      tt: TravelTimes) -> WarmStart:
    """Simulate and validate ``candidate``; accept it as incumbent when it violates nothing."""
    t0 = time.perf_counter()
    ts = simulate(inst, tt, candidate)
    violations = check_constraints(inst, tt, ts)
    inc = None
    if not violations:
        x = milp_model.schedule_to_vector(model, ts)
        inc = Incumbent(x, ts.makespan, ts)
    return WarmStart(not violations, inc, violations, time.perf_counter() - t0)


class _Search:
    def __init__(self, model: MilpModel, inst: Instance, tt: TravelTimes, opts: SolveOptions):
        self.model = model
        self.inst = inst
        self.tt = tt
        self.opts = opts
        self.binaries = model.binary_indices()
        A, senses, rhs = model.matrix()
        self.base = simplex.LpProblem(A, senses, rhs, model.lb, model.ub, model.objective)
        self.nodes = 0
        self.lp_iters = 0
        self.trace: list[str] = []

    def solve_node(self, lb, ub):
        p = self.base.with_bounds(lb, ub)
        try:
            res = simplex.solve_lp(p, tol=self.opts.lp_tol)
        except simplex.NumericalSingularity as exc:
            raise SolverFailure(str(exc)) from exc
        self.nodes += 1
        self.lp_iters += res.iterations
        if res.status is simplex.LpStatus.ITERATION_LIMIT:
            raise SolverFailure("LP iteration limit reached")
        if res.status is simplex.LpStatus.UNBOUNDED:
            raise SolverFailure("LP relaxation unbounded")
        return res

    def fractional_var(self, x) -> int:
        vals = x[self.binaries]
        frac = np.abs(vals - np.round(vals))
        frac[frac <= INT_TOL] = 0.0
        if not frac.any():
            return -1
        if self.opts.branching == "first_fractional":
            return int(self.binaries[np.flatnonzero(frac)[0]])
        # distance from 0.5 is smallest for the most fractional value
        score = np.abs(vals - np.floor(vals) - 0.5)
        score[frac == 0.0] = np.inf
        return int(self.binaries[int(np.argmin(score))])

    def to_incumbent(self, x) -> Optional[Incumbent]:
        x = x.copy()
        x[self.binaries] = np.round(x[self.binaries])
        try:
            ts_lp = milp_model.vector_to_schedule(self.model, x, self.inst)
        except NonIntegralSolution:
            return None
        if ts_lp.candidate.problems():
            return None
        ts = simulate(self.inst, self.tt, ts_lp.candidate)
        if check_constraints(self.inst, self.tt, ts):
            return None
        return Incumbent(milp_model.schedule_to_vector(self.model, ts), ts.makespan, ts)

    def note(self, node_id, depth, bound, action):
        if self.opts.trace:
            b = "inf" if not np.isfinite(bound) else f"{bound:.9g}"
            self.trace.append(f"node={node_id} depth={depth} bound={b} action={action}")


def solve(model: MilpModel, opts: SolveOptions, inst: Instance, tt: TravelTimes,
          warm_start: Optional[CandidateSchedule] = None) -> SolveResult:
    """Branch and bound; ``inst``/``tt`` are used to re-simulate integral solutions."""
    validation_time = 0.0
    incumbent: Optional[Incumbent] = None
    accepted = False
    rejection: list = []
    if warm_start is not None:
        ws = inject_warm_start(model, warm_start, inst, tt)
        validation_time = ws.elapsed
        accepted = ws.accepted
        rejection = ws.violations
        incumbent = ws.incumbent
        if not accepted:
            log.info("warm start rejected: %s", ", ".join(map(str, ws.violations)))

    t0 = time.perf_counter()
    deadline = t0 + opts.time_limit
    search = _Search(model, inst, tt, opts)
    limit = False
    best_first = opts.node_selection == "best_bound"

    def cutoff():
        if incumbent is None:
            return np.inf
        return incumbent.value - opts.gap * abs(incumbent.value)

    queue: list = []
    next_id = 0
    global_bound = np.inf

    def consider(res, node_id, depth, lb, ub):
        nonlocal incumbent
        if res.status is simplex.LpStatus.INFEASIBLE:
            search.note(node_id, depth, np.inf, "infeasible")
            return
        bound = res.objective
        if bound >= cutoff():
            search.note(node_id, depth, bound, "prune")
            return
        v = search.fractional_var(res.x)
        if v < 0:
            cand = search.to_incumbent(res.x)
            if cand is not None and (incumbent is None or cand.value < incumbent.value):
                incumbent = cand
                search.note(node_id, depth, bound, "incumbent")
            else:
                search.note(node_id, depth, bound, "integral")
            return
        key = (bound, node_id) if best_first else (-depth, -node_id)
        heapq.heappush(queue, (key, node_id, depth, bound, lb, ub, v, res.x[v]))

    root_lb, root_ub = model.lb.copy(), model.ub.copy()
    consider(search.solve_node(root_lb, root_ub), next_id, 0, root_lb, root_ub)
    next_id += 1

    while queue:
        if search.nodes >= opts.node_limit or time.perf_counter() > deadline:
            limit = True
            break
        _, node_id, depth, bound, lb, ub, v, val = heapq.heappop(queue)
        if bound >= cutoff():
            search.note(node_id, depth, bound, "prune")
            continue
        search.note(node_id, depth, bound, "branch")
        for child in ("floor", "ceil"):
            clb, cub = lb.copy(), ub.copy()
            if child == "floor":
                cub[v] = np.floor(val)
            else:
                clb[v] = np.ceil(val)
            consider(search.solve_node(clb, cub), next_id, depth + 1, clb, cub)
            next_id += 1

    if queue:
        global_bound = min(item[3] for item in queue)
    search_time = time.perf_counter() - t0

    if incumbent is None:
        status = SolveStatus.INFEASIBLE
        objective = np.inf
    else:
        status = SolveStatus.FEASIBLE if limit else SolveStatus.OPTIMAL
        objective = incumbent.value
    bound = objective if not limit else min(global_bound, objective)
    return SolveResult(
        status=status,
        schedule=None if incumbent is None else incumbent.schedule,
        objective=float(objective),
        bound=float(bound),
        nodes_explored=search.nodes,
        lp_iterations_total=search.lp_iters,
        search_time=search_time,
        validation_time=validation_time,
        warm_start_accepted=accepted,
        limit_reached=limit,
        rejection=rejection,
        trace=search.trace,
    )


def solve_instance(inst: Instance, tt: TravelTimes, opts: SolveOptions = SolveOptions(),
                   warm_start: Optional[CandidateSchedule] = None) -> SolveResult:
    t0 = time.perf_counter()
    model = milp_model.build(inst, tt)
    build_time = time.perf_counter() - t0
    res = solve(model, opts, inst, tt, warm_start)
    res.build_time = build_time
    return res
