"""Problem instances: agents, tasks, obstacles, precedence and time windows.

An :class:`Instance` is immutable once built. Use :func:`generate` for random
instances, :func:`validate` to list invariant violations and :func:`save` /
:func:`load` for the versioned JSON file format.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

SCHEMA_VERSION = 1


class GenerationFailed(RuntimeError):
    """Raised when no acceptable instance is found within the retry budget."""


class ParseError(ValueError):
    """Malformed instance file; the message carries line or field context."""


class SchemaVersionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Agent:
    id: int
    start_position: tuple[float, float]
    velocity: float


@dataclass(frozen=True)
class Task:
    id: int
    position: tuple[float, float]
    window_start: float
    window_end: float


@dataclass(frozen=True)
class Obstacle:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]`` in meters."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, p, strict: bool = True) -> bool:
        x, y = p
        if strict:
            return self.xmin < x < self.xmax and self.ymin < y < self.ymax
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    agents: tuple[Agent, ...]
    tasks: tuple[Task, ...]
    obstacles: tuple[Obstacle, ...]
    workspace: tuple[float, float]
    durations: np.ndarray  # (n_agents, n_tasks), seconds
    precedence: np.ndarray  # (n_tasks, n_tasks), O[j, k] = 1 -> j before k
    wait: np.ndarray  # (n_tasks, n_tasks), seconds
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "workspace", tuple(float(v) for v in self.workspace))
        object.__setattr__(self, "durations", _frozen(self.durations, float))
        object.__setattr__(self, "precedence", _frozen(self.precedence, np.int8))
        object.__setattr__(self, "wait", _frozen(self.wait, float))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def window_start(self) -> np.ndarray:
        return np.array([t.window_start for t in self.tasks], dtype=float)

    @property
    def window_end(self) -> np.ndarray:
        return np.array([t.window_end for t in self.tasks], dtype=float)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([a.velocity for a in self.agents], dtype=float)

    @property
    def horizon(self) -> float:
        """Planning horizon ``t_ddl``: the latest window end over all tasks."""
        return float(max(t.window_end for t in self.tasks))

    def replace(self, **changes) -> "Instance":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return Instance(**kw)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.agents == other.agents
            and self.tasks == other.tasks
            and self.obstacles == other.obstacles
            and self.workspace == other.workspace
            and self.seed == other.seed
            and np.array_equal(self.durations, other.durations)
            and np.array_equal(self.precedence, other.precedence)
            and np.array_equal(self.wait, other.wait)
        )

    __hash__ = None


@dataclass(frozen=True)
class GenConfig:
    n_agents: int = 3
    n_tasks: int = 6
    n_obstacles: int = 3
    workspace: tuple[float, float] = (100.0, 100.0)
    velocity_range: tuple[float, float] = (0.5, 2.0)
    duration_range: tuple[float, float] = (5.0, 20.0)
    release_range: tuple[float, float] = (0.0, 30.0)
    obstacle_size_range: tuple[float, float] = (5.0, 25.0)
    window_tightness: float = 0.5
    precedence_density: float = 0.2
    wait_range: tuple[float, float] = (0.0, 5.0)
    max_retries: int = 20

    def check(self) -> list[str]:
        problems = []
        if self.n_agents < 1 or self.n_tasks < 1 or self.n_obstacles < 0:
            problems.append("n_agents and n_tasks must be >= 1, n_obstacles >= 0")
        if min(self.workspace) <= 0:
            problems.append("workspace dimensions must be positive")
        for name in ("velocity_range", "duration_range", "release_range",
                     "obstacle_size_range", "wait_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi) or not np.isfinite(hi):
                problems.append(f"{name} must satisfy 0 <= lo <= hi < inf")
        if self.velocity_range[0] <= 0:
            problems.append("velocity_range lower bound must be > 0")
        if self.duration_range[0] <= 0:
            problems.append("duration_range lower bound must be > 0")
        if not (0 < self.window_tightness <= 1):
            problems.append("window_tightness must lie in (0, 1]")
        if not (0 <= self.precedence_density < 1):
            problems.append("precedence_density must lie in [0, 1)")
        if self.max_retries < 1:
            problems.append("max_retries must be >= 1")
        return problems

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown GenConfig keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}


# --------------------------------------------------------------------------
# validation


def topological_order(precedence) -> Optional[list[int]]:
    """Kahn's algorithm, smallest ready index first; ``None`` on a cycle."""
    O = np.asarray(precedence)
    n = O.shape[0]
    indeg = (O != 0).sum(axis=0).astype(int)
    ready = [k for k in range(n) if indeg[k] == 0]
    order = []
    heapq.heapify(ready)
    while ready:
        j = heapq.heappop(ready)
        order.append(j)
        for k in np.flatnonzero(O[j]):
            indeg[k] -= 1
            if indeg[k] == 0:
                heapq.heappush(ready, int(k))
    return order if len(order) == n else None


def _cycle_nodes(O: np.ndarray) -> list[int]:
    """Tasks that lie on a directed cycle of ``O``."""
    n = O.shape[0]
    reach = (O != 0).astype(bool)
    for m in range(n):  # transitive closure
        reach |= reach[:, [m]] & reach[[m], :]
    return [k for k in range(n) if reach[k, k]]


def validate(inst: Instance) -> list[str]:
    """Return human-readable violations; an empty list means the instance is valid."""
    out: list[str] = []
    na, nt = inst.n_agents, inst.n_tasks
    W, H = inst.workspace
    if na < 1:
        out.append("agents: at least one agent required")
    if nt < 1:
        out.append("tasks: at least one task required")
    for idx, a in enumerate(inst.agents):
        if a.id != idx:
            out.append(f"agents[{idx}]: id {a.id} does not match position")
        if not (np.isfinite(a.velocity) and a.velocity > 0):
            out.append(f"agents[{idx}].velocity: must be finite and > 0, got {a.velocity}")
        if not _inside(a.start_position, W, H):
            out.append(f"agents[{idx}].start_position: outside workspace")
        for o_i, ob in enumerate(inst.obstacles):
            if ob.contains(a.start_position):
                out.append(f"agents[{idx}].start_position: inside obstacle {o_i}")
    for idx, t in enumerate(inst.tasks):
        if t.id != idx:
            out.append(f"tasks[{idx}]: id {t.id} does not match position")
        if not (0 <= t.window_start < t.window_end) or not np.isfinite(t.window_end):
            out.append(f"tasks[{idx}].window: need 0 <= window_start < window_end")
        if not _inside(t.position, W, H):
            out.append(f"tasks[{idx}].position: outside workspace")
        for o_i, ob in enumerate(inst.obstacles):
            if ob.contains(t.position):
                out.append(f"tasks[{idx}].position: inside obstacle {o_i}")
    for o_i, ob in enumerate(inst.obstacles):
        if not (ob.xmin < ob.xmax and ob.ymin < ob.ymax):
            out.append(f"obstacles[{o_i}]: min corner must be below max corner")

    D, O, Wt = inst.durations, inst.precedence, inst.wait
    if D.shape != (na, nt):
        out.append(f"durations: shape {D.shape} != ({na}, {nt})")
    else:
        for i, k in zip(*np.nonzero(~(np.isfinite(D) & (D > 0)))):
            out.append(f"durations[{i}][{k}]: must be finite and > 0")
    if O.shape != (nt, nt) or Wt.shape != (nt, nt):
        out.append("precedence/wait: must be n_tasks x n_tasks")
        return out
    if not np.isin(O, (0, 1)).all():
        out.append("precedence: entries must be 0 or 1")
    for k in np.flatnonzero(np.diag(O)):
        out.append(f"precedence[{k}][{k}]: diagonal must be zero")
    cyc = _cycle_nodes(O * (1 - np.eye(nt, dtype=O.dtype)))
    if cyc:
        out.append(f"precedence: cycle through tasks {cyc}")
    for j, k in zip(*np.nonzero(~(np.isfinite(Wt) & (Wt >= 0)))):
        out.append(f"wait[{j}][{k}]: must be finite and >= 0")
    for j, k in zip(*np.nonzero((O == 0) & (Wt != 0))):
        out.append(f"wait[{j}][{k}]: must be 0 where precedence is 0")
    return out


def _inside(p, W, H) -> bool:
    return 0 <= p[0] <= W and 0 <= p[1] <= H


# --------------------------------------------------------------------------
# generation


def _sample_free_point(rng, workspace, obstacles, tries: int = 10_000):
    W, H = workspace
    for _ in range(tries):
        p = (float(rng.uniform(0, W)), float(rng.uniform(0, H)))
        if not any(ob.contains(p, strict=False) for ob in obstacles):
            return p
    raise GenerationFailed("could not place a point outside the obstacles")


def _draft(config: GenConfig, rng) -> Instance:
    W, H = config.workspace
    na, nt = config.n_agents, config.n_tasks
    obstacles = []
    lo, hi = config.obstacle_size_range
    for _ in range(config.n_obstacles):
        w, h = rng.uniform(lo, hi, size=2)
        w, h = min(w, 0.9 * W), min(h, 0.9 * H)
        x0 = rng.uniform(0, W - w)
        y0 = rng.uniform(0, H - h)
        obstacles.append(Obstacle(float(x0), float(y0), float(x0 + w), float(y0 + h)))

    agents = []
    for i in range(na):
        p = _sample_free_point(rng, (W, H), obstacles)
        v = float(rng.uniform(*config.velocity_range))
        agents.append(Agent(i, p, v))
    positions = [_sample_free_point(rng, (W, H), obstacles) for _ in range(nt)]
    releases = rng.uniform(*config.release_range, size=nt)
    durations = rng.uniform(*config.duration_range, size=(na, nt))

    O = np.zeros((nt, nt), dtype=np.int8)
    Wt = np.zeros((nt, nt))
    # random DAG over index order, then keep each edge with the configured density
    dag = np.triu(rng.random((nt, nt)) < 0.5, k=1)
    keep = rng.random((nt, nt)) < config.precedence_density
    O[dag & keep] = 1
    waits = rng.uniform(*config.wait_range, size=(nt, nt))
    Wt[O == 1] = waits[O == 1]

    # provisional windows; closed later from the CA-EDF probe
    tasks = [Task(k, positions[k], float(releases[k]), float("inf")) for k in range(nt)]
    return Instance(agents, tasks, obstacles, (W, H), durations, O, Wt, 0)


def generate(config: GenConfig, seed: int) -> Instance:
    """Draw a random instance whose windows admit the CA-EDF schedule.

    Window ends are ``e_k = F_k + (1 - tightness) * F_max`` where ``F_k`` is
    the finish time of task ``k`` in the CA-EDF schedule of the draft and
    ``F_max`` its makespan, so ``tightness = 1`` leaves zero slack.
    """
    from .heuristics import constraint_aware_edf
    from .motion import RoadmapDisconnected, compute_travel_times
    from .schedule import simulate

    problems = config.check()
    if problems:
        raise ValueError("; ".join(problems))
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    for attempt in range(config.max_retries):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        draft = _draft(config, rng).replace(seed=seed)
        try:
            tt = compute_travel_times(draft)
        except RoadmapDisconnected:
            continue
        ts = simulate(draft, tt, constraint_aware_edf(draft, tt))
        if not np.all(np.isfinite(ts.finish)):
            continue
        fmax = float(ts.finish.max())
        slack = (1.0 - config.window_tightness) * fmax
        tasks = [
            Task(t.id, t.position, t.window_start, float(ts.finish[t.id] + slack))
            for t in draft.tasks
        ]
        inst = draft.replace(tasks=tasks)
        # the probe must survive with the final windows; it only fails on rounding
        if simulate(inst, tt, constraint_aware_edf(inst, tt)).feasible.all():
            return inst
    raise GenerationFailed(
        f"no feasible instance after {config.max_retries} attempts (seed={seed})"
    )


# --------------------------------------------------------------------------
# file format


def to_dict(inst: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": inst.seed,
        "workspace": list(inst.workspace),
        "agents": [
            {"id": a.id, "start_position": list(a.start_position), "velocity": a.velocity}
            for a in inst.agents
        ],
        "tasks": [
            {
                "id": t.id,
                "position": list(t.position),
                "window_start": t.window_start,
                "window_end": t.window_end,
            }
            for t in inst.tasks
        ],
        "obstacles": [[o.xmin, o.ymin, o.xmax, o.ymax] for o in inst.obstacles],
        "durations": inst.durations.tolist(),
        "precedence": inst.precedence.astype(int).tolist(),
        "wait": inst.wait.tolist(),
    }


_REQUIRED = ("schema_version", "seed", "workspace", "agents", "tasks", "obstacles",
             "durations", "precedence", "wait")


def from_dict(d: dict) -> Instance:
    if not isinstance(d, dict):
        raise ParseError("top level: expected an object")
    if "schema_version" in d and d["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"schema_version {d['schema_version']!r} unsupported (expected {SCHEMA_VERSION})"
        )
    for key in _REQUIRED:
        if key not in d:
            raise ParseError(f"missing field '{key}'")
    try:
        agents = [
            Agent(int(a["id"]), (float(a["start_position"][0]), float(a["start_position"][1])),
                  float(a["velocity"]))
            for a in d["agents"]
        ]
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"field 'agents': {exc!r}") from exc
    try:
        tasks = [
            Task(int(t["id"]), (float(t["position"][0]), float(t["position"][1])),
                 float(t["window_start"]), float(t["window_end"]))
            for t in d["tasks"]
        ]
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"field 'tasks': {exc!r}") from exc
    try:
        obstacles = [Obstacle(*map(float, o)) for o in d["obstacles"]]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"field 'obstacles': {exc!r}") from exc
    arrays = {}
    for key, dtype, shape in (
        ("durations", float, (len(agents), len(tasks))),
        ("precedence", np.int8, (len(tasks), len(tasks))),
        ("wait", float, (len(tasks), len(tasks))),
    ):
        try:
            arr = np.array(d[key], dtype=dtype).reshape(shape)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"field '{key}': expected a {shape[0]}x{shape[1]} matrix") from exc
        arrays[key] = arr
    return Instance(agents, tasks, obstacles, tuple(d["workspace"]), arrays["durations"],
                    arrays["precedence"], arrays["wait"], int(d["seed"]))


def dumps(inst: Instance) -> str:
    # json writes floats with repr(), i.e. shortest round-tripping form (<= 17 digits)
    return json.dumps(to_dict(inst), indent=1) + "\n"


def save(inst: Instance, path) -> None:
    Path(path).write_text(dumps(inst))


def loads(text: str) -> Instance:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(d)


def load(path) -> Instance:
    return loads(Path(path).read_text())
