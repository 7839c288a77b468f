"""Sampled roadmap over the obstacle field and collision-free travel times.

One roadmap is shared by all agents; per-agent travel time is the
shortest-path length divided by the agent's speed.

Collision convention: a segment collides with an obstacle iff the *open*
segment meets the *open* interior of the rectangle. Touching a boundary edge or
corner is allowed. :func:`segment_collides` is exact: it evaluates the slab
test in rational arithmetic (``fractions.Fraction``) on the float inputs. The
bulk edge test in :func:`build_roadmap` runs the same slab test vectorized in
floating point and defers to the exact test whenever the float decision lies
within ``1e-9`` of the boundary.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .instance import Instance, Obstacle

DEFAULT_SAMPLES = 200
RADIUS_RETRIES = 5
_AMBIGUOUS = 1e-9


class RoadmapDisconnected(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Roadmap:
    nodes: np.ndarray  # (n, 2); first n_agents rows are agent starts, then tasks
    edges: tuple  # per node: tuple of (neighbor, length) sorted by neighbor
    n_agents: int
    n_tasks: int
    radius: float
    rng_seed: int

    @property
    def n_anchors(self) -> int:
        return self.n_agents + self.n_tasks

    def agent_node(self, i: int) -> int:
        return i

    def task_node(self, k: int) -> int:
        return self.n_agents + k

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(u, v, w) for u, nbrs in enumerate(self.edges) for v, w in nbrs if u < v]

    def __eq__(self, other):
        if not isinstance(other, Roadmap):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and self.edges == other.edges
            and (self.n_agents, self.n_tasks, self.radius, self.rng_seed)
            == (other.n_agents, other.n_tasks, other.radius, other.rng_seed)
        )


@dataclass(frozen=True, eq=False)
class TravelTimes:
    from_start: np.ndarray  # (n_agents, n_tasks) seconds
    between_tasks: np.ndarray  # (n_agents, n_tasks, n_tasks) seconds
    task_distances: np.ndarray  # (n_tasks, n_tasks) meters
    start_distances: np.ndarray  # (n_agents, n_tasks) meters

    def scaled(self, factor: float) -> "TravelTimes":
        """Same distances, all times multiplied by ``factor``."""
        return TravelTimes(self.from_start * factor, self.between_tasks * factor,
                           self.task_distances, self.start_distances)


# --------------------------------------------------------------------------
# collision tests


def _exact_collides(p, q, ob: Obstacle) -> bool:
    lo, hi = Fraction(0), Fraction(1)
    for a, b, mn, mx in ((p[0], q[0], ob.xmin, ob.xmax), (p[1], q[1], ob.ymin, ob.ymax)):
        a, b, mn, mx = Fraction(a), Fraction(b), Fraction(mn), Fraction(mx)
        d = b - a
        if d == 0:
            if not (mn < a < mx):
                return False
            continue
        t0, t1 = (mn - a) / d, (mx - a) / d
        if t0 > t1:
            t0, t1 = t1, t0
        lo, hi = max(lo, t0), min(hi, t1)
        if lo >= hi:
            return False
    return lo < hi


def segment_collides(p, q, obstacles) -> bool:
    """True iff the open segment ``(p, q)`` meets some obstacle's open interior."""
    return any(_exact_collides(p, q, ob) for ob in obstacles)


def _bulk_collides(P: np.ndarray, Q: np.ndarray, obstacles) -> np.ndarray:
    """Vectorized slab test for segment arrays ``P[m], Q[m]``."""
    hit = np.zeros(len(P), dtype=bool)
    if len(P) == 0:
        return hit
    D = Q - P
    for ob in obstacles:
        lo = np.zeros(len(P))
        hi = np.ones(len(P))
        empty = np.zeros(len(P), dtype=bool)
        ambiguous = np.zeros(len(P), dtype=bool)
        for ax, (mn, mx) in enumerate(((ob.xmin, ob.xmax), (ob.ymin, ob.ymax))):
            d = D[:, ax]
            a = P[:, ax]
            flat = d == 0
            empty |= flat & ~((mn < a) & (a < mx))
            with np.errstate(divide="ignore", invalid="ignore"):
                t0 = (mn - a) / d
                t1 = (mx - a) / d
            ta = np.where(flat, -np.inf, np.minimum(t0, t1))
            tb = np.where(flat, np.inf, np.maximum(t0, t1))
            lo = np.maximum(lo, ta)
            hi = np.minimum(hi, tb)
        ambiguous = ~empty & (np.abs(hi - lo) <= _AMBIGUOUS)
        res = ~empty & (lo < hi)
        for m in np.flatnonzero(ambiguous):
            res[m] = _exact_collides(P[m], Q[m], ob)
        hit |= res
    return hit


# --------------------------------------------------------------------------
# roadmap


def default_radius(inst: Instance) -> float:
    W, H = inst.workspace
    return float(np.hypot(W, H)) / 4.0


def _sample_nodes(inst: Instance, n_samples: int, rng) -> np.ndarray:
    W, H = inst.workspace
    out = []
    while len(out) < n_samples:
        p = (float(rng.uniform(0, W)), float(rng.uniform(0, H)))
        if not any(ob.contains(p, strict=False) for ob in inst.obstacles):
            out.append(p)
    return np.array(out, dtype=float).reshape(-1, 2)


def _components(n: int, edges) -> np.ndarray:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    return np.array([find(x) for x in range(n)])


def _connect(nodes: np.ndarray, radius: float, obstacles):
    n = len(nodes)
    iu, iv = np.triu_indices(n, k=1)
    diff = nodes[iv] - nodes[iu]
    length = np.hypot(diff[:, 0], diff[:, 1])
    near = length <= radius
    iu, iv, length = iu[near], iv[near], length[near]
    free = ~_bulk_collides(nodes[iu], nodes[iv], obstacles)
    iu, iv, length = iu[free], iv[free], length[free]
    adj = [[] for _ in range(n)]
    for u, v, w in zip(iu.tolist(), iv.tolist(), length.tolist()):
        adj[u].append((v, w))
        adj[v].append((u, w))
    return tuple(tuple(sorted(a)) for a in adj), list(zip(iu.tolist(), iv.tolist()))


def build_roadmap(inst: Instance, n_samples: int = DEFAULT_SAMPLES,
                  radius: float | None = None, seed: int = 0,
                  retries: int = RADIUS_RETRIES) -> Roadmap:
    """PRM-style roadmap: anchors plus uniform collision-free samples.

    Anchors are the agent starts followed by the task positions. When the
    anchors are not all in one component the radius is doubled and sampling
    repeated, at most ``retries`` times.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    radius = default_radius(inst) if radius is None else float(radius)
    if radius <= 0:
        raise ValueError("radius must be > 0")
    anchors = np.array(
        [a.start_position for a in inst.agents] + [t.position for t in inst.tasks], dtype=float
    ).reshape(-1, 2)
    n_anchor = len(anchors)
    for attempt in range(retries + 1):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), attempt]))
        nodes = np.vstack([anchors, _sample_nodes(inst, n_samples, rng)])
        edges, pairs = _connect(nodes, radius, inst.obstacles)
        comp = _components(len(nodes), pairs)
        if len(set(comp[:n_anchor].tolist())) <= 1:
            nodes.setflags(write=False)
            return Roadmap(nodes, edges, inst.n_agents, inst.n_tasks, radius, int(seed))
        radius *= 2.0
    raise RoadmapDisconnected(
        f"anchors still disconnected after {retries} radius doublings (radius={radius / 2:g})"
    )


def dijkstra(rm: Roadmap, source: int) -> np.ndarray:
    """Shortest-path lengths from ``source``; heap ties broken by node index."""
    dist = np.full(len(rm.nodes), np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(len(rm.nodes), dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in rm.edges[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def travel_times(inst: Instance, rm: Roadmap) -> TravelTimes:
    na, nt = inst.n_agents, inst.n_tasks
    task_d = np.zeros((nt, nt))
    start_d = np.zeros((na, nt))
    for j in range(nt):
        dist = dijkstra(rm, rm.task_node(j))
        # lower-triangle entries mirror the upper ones so d is exactly symmetric
        task_d[j, j + 1:] = dist[rm.task_node(j + 1):rm.task_node(nt)]
        task_d[j + 1:, j] = task_d[j, j + 1:]
    for i in range(na):
        dist = dijkstra(rm, rm.agent_node(i))
        start_d[i] = dist[rm.task_node(0):rm.task_node(nt)]
    if not (np.isfinite(task_d).all() and np.isfinite(start_d).all()):
        raise RoadmapDisconnected("some anchor pair is unreachable on the roadmap")
    v = inst.velocities
    from_start = start_d / v[:, None]
    between = task_d[None, :, :] / v[:, None, None]
    for a in (from_start, between, task_d, start_d):
        a.setflags(write=False)
    return TravelTimes(from_start, between, task_d, start_d)


def compute_travel_times(inst: Instance, n_samples: int = DEFAULT_SAMPLES) -> TravelTimes:
    """Roadmap + travel times with the default parameters, seeded by ``inst.seed``."""
    return travel_times(inst, build_roadmap(inst, n_samples, default_radius(inst), inst.seed))


def dump_roadmap(rm: Roadmap, path) -> None:
    doc = {
        "schema_version": 1,
        "rng_seed": rm.rng_seed,
        "radius": rm.radius,
        "n_agents": rm.n_agents,
        "n_tasks": rm.n_tasks,
        "nodes": rm.nodes.tolist(),
        "edges": [[u, v, w] for u, v, w in rm.edge_list()],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
