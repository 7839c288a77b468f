"""Five-method benchmark harness and the brute-force optimality oracle."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import heuristics, policy
from .bnb import SolveOptions, SolverFailure, solve_instance
from .instance import Instance
from .motion import TravelTimes
from .schedule import CandidateSchedule, TimedSchedule, check_constraints, quality_score, simulate

log = logging.getLogger(__name__)

RAW_HEADER = ["method", "instance", "repeat", "status", "objective", "quality_score",
              "search_time_s", "validation_time_s", "total_time_s", "nodes"]
SUMMARY_HEADER = ["method", "n", "excluded", "mean_total_time_s", "std_total_time_s",
                  "mean_search_time_s", "std_search_time_s", "mean_validation_time_s",
                  "std_validation_time_s", "mean_quality_score", "std_quality_score",
                  "warm_start_accept_rate", "single_sample"]


class MethodId(str, Enum):
    BASELINE = "baseline"
    EDF = "edf"
    CA_EDF = "ca_edf"
    BC_ONLY = "bc_only"
    BC_RL = "bc_rl"

    @property
    def needs_policy(self) -> bool:
        return self in (MethodId.BC_ONLY, MethodId.BC_RL)


class LimitExceeded(ValueError):
    pass


# --------------------------------------------------------------------------
# brute force


@dataclass(frozen=True)
class BruteForceLimits:
    max_tasks: int = 6
    max_candidates: int = 2_000_000


@dataclass
class BruteForceResult:
    feasible: bool
    makespan: float
    schedule: Optional[TimedSchedule]
    candidates: int


def candidate_count(n_agents: int, n_tasks: int) -> int:
    """Assignments times per-agent orderings: ``n_tasks! * C(n_tasks + n_agents - 1, n_agents - 1)``."""
    return math.factorial(n_tasks) * math.comb(n_tasks + n_agents - 1, n_agents - 1)


def enumerate_candidates(n_agents: int, n_tasks: int):
    for assign in itertools.product(range(n_agents), repeat=n_tasks):
        groups = [[k for k in range(n_tasks) if assign[k] == i] for i in range(n_agents)]
        for orders in itertools.product(*(itertools.permutations(g) for g in groups)):
            yield CandidateSchedule.from_orders(orders, n_tasks)


def brute_force_optimal(inst: Instance, tt: TravelTimes,
                        limits: BruteForceLimits = BruteForceLimits()) -> BruteForceResult:
    """Minimum simulated makespan over every assignment and per-agent order.

    Ties are broken by the lexicographic candidate key.
    """
    na, nt = inst.n_agents, inst.n_tasks
    total = candidate_count(na, nt)
    if nt > limits.max_tasks or total > limits.max_candidates:
        raise LimitExceeded(f"{na} agents x {nt} tasks: {total} candidates exceed the limits")
    best: Optional[TimedSchedule] = None
    best_key = None
    for cand in enumerate_candidates(na, nt):
        ts = simulate(inst, tt, cand)
        if not ts.all_feasible:
            continue
        key = (ts.makespan, cand.key())
        if best is None or key < best_key:
            best, best_key = ts, key
    if best is None:
        return BruteForceResult(False, math.inf, None, total)
    return BruteForceResult(True, best.makespan, best, total)


# --------------------------------------------------------------------------
# benchmark


@dataclass
class BenchInstance:
    name: str
    inst: Instance
    tt: TravelTimes


@dataclass
class BenchRow:
    method: str
    instance: str
    repeat: int
    status: str
    objective: float
    quality_score: float
    search_time_s: float
    validation_time_s: float
    total_time_s: float
    nodes: int
    warm_start_accepted: bool = False
    schedule_valid: bool = False

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def raw(self) -> list:
        return [self.method, self.instance, self.repeat, self.status, self.objective,
                self.quality_score, self.search_time_s, self.validation_time_s,
                self.total_time_s, self.nodes]


@dataclass
class MethodStats:
    method: str
    n: int
    excluded: int
    mean_total_time_s: float
    std_total_time_s: float
    mean_search_time_s: float
    std_search_time_s: float
    mean_validation_time_s: float
    std_validation_time_s: float
    mean_quality_score: float
    std_quality_score: float
    warm_start_accept_rate: float
    single_sample: bool

    def row(self) -> list:
        return [getattr(self, k) for k in SUMMARY_HEADER]


@dataclass
class BenchReport:
    stats: list[MethodStats]
    rows: list[BenchRow]
    config: dict = field(default_factory=dict)

    def by_method(self, method) -> MethodStats:
        name = MethodId(method).value
        for s in self.stats:
            if s.method == name:
                return s
        raise KeyError(name)


def _mean_std(values) -> tuple[float, float]:
    """Mean and n-1 standard deviation; the deviation is 0 for fewer than two values."""
    if not values:
        return math.nan, math.nan
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def aggregate(method: str, rows: Sequence[BenchRow]) -> MethodStats:
    ok = [r for r in rows if r.ok]
    tot = _mean_std([r.total_time_s for r in ok])
    sea = _mean_std([r.search_time_s for r in ok])
    val = _mean_std([r.validation_time_s for r in ok])
    qs = _mean_std([r.quality_score for r in ok])
    acc = float(np.mean([r.warm_start_accepted for r in ok])) if ok else math.nan
    return MethodStats(method, len(ok), len(rows) - len(ok), *tot, *sea, *val, *qs, acc,
                       len(ok) == 1)


def warm_start_for(method: MethodId, b: BenchInstance,
                   nets: dict) -> Optional[CandidateSchedule]:
    if method is MethodId.BASELINE:
        return None
    if method is MethodId.EDF:
        return heuristics.edf(b.inst, b.tt)
    if method is MethodId.CA_EDF:
        return heuristics.constraint_aware_edf(b.inst, b.tt)
    return policy.predict(nets[method], b.inst, b.tt)


def run_row(method: MethodId, b: BenchInstance, repeat: int, opts: SolveOptions,
            nets: dict) -> BenchRow:
    try:
        warm = warm_start_for(method, b, nets)
        res = solve_instance(b.inst, b.tt, opts, warm_start=warm)
    except SolverFailure as exc:
        log.warning("%s on %s repeat %d failed: %s", method.value, b.name, repeat, exc)
        return BenchRow(method.value, b.name, repeat, "failed", math.nan, math.nan,
                        math.nan, math.nan, math.nan, 0)
    ts = res.schedule
    score = quality_score(ts) if ts is not None else math.nan
    valid = ts is not None and not check_constraints(b.inst, b.tt, ts)
    return BenchRow(method.value, b.name, repeat, res.status.value, res.objective, score,
                    res.search_time, res.validation_time, res.total_time, res.nodes_explored,
                    res.warm_start_accepted, valid)


def run_benchmark(instances: Sequence[BenchInstance], methods: Sequence, repeats: int,
                  opts: SolveOptions = SolveOptions(), nets: Optional[dict] = None,
                  jobs: int = 1, config: Optional[dict] = None) -> BenchReport:
    """Solve every (method, instance, repeat) and aggregate per method.

    ``nets`` maps the policy methods (``bc_only``, ``bc_rl``) to trained
    networks. Rows run in order (repeat-major, then instance, then method)
    unless ``jobs > 1``; the report order is the same either way.
    """
    methods = [MethodId(m) for m in methods]
    nets = {MethodId(k): v for k, v in (nets or {}).items()}
    for m in methods:
        if m.needs_policy and m not in nets:
            raise ValueError(f"method {m.value} needs a policy checkpoint")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    tasks = [(m, b, r) for r in range(repeats) for b in instances for m in methods]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda t: run_row(t[0], t[1], t[2], opts, nets), tasks))
    else:
        rows = [run_row(m, b, r, opts, nets) for m, b, r in tasks]
    stats = [aggregate(m.value, [r for r in rows if r.method == m.value]) for m in methods]
    for s in stats:
        if s.excluded:
            log.warning("%s: %d rows excluded from statistics", s.method, s.excluded)
    return BenchReport(stats, rows, dict(config or {}))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def emit_report(report: BenchReport, out_dir) -> tuple[Path, Path]:
    """Write ``summary.csv`` and ``raw.csv`` (6 significant digits)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary, raw = out / "summary.csv", out / "raw.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for s in report.stats:
            w.writerow([_fmt(v) for v in s.row()])
    with open(raw, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_HEADER)
        for r in report.rows:
            w.writerow([_fmt(v) for v in r.raw()])
    return summary, raw


def read_raw(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
