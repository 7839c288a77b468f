"""Message-passing assignment policy with hand-written reverse-mode gradients.

The network embeds agents and tasks, runs ``L`` rounds of message passing
(agent <-> task over every assignment edge, task -> task over precedence edges
in both directions) and scores every (agent, task) pair. A softmax over agents
turns the scores into a per-task assignment distribution.

Trained first by behavior cloning on expert (exact-solver) assignments, then
fine-tuned with REINFORCE against the warm-started solver.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .instance import Instance, topological_order
from .motion import TravelTimes
from .schedule import CandidateSchedule

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
AGENT_FEATURES = 4
TASK_FEATURES = 7
EDGE_FEATURES = 2
FEATURE_CLIP = 10.0


class DimensionMismatch(ValueError):
    pass


class DivergenceDetected(FloatingPointError):
    pass


# --------------------------------------------------------------------------
# graph encoding


@dataclass(frozen=True, eq=False)
class GraphInput:
    agent_x: np.ndarray  # (n_agents, 4)
    task_x: np.ndarray  # (n_tasks, 7)
    edge_x: np.ndarray  # (n_agents, n_tasks, 2)
    prec: np.ndarray  # (n_tasks, n_tasks) 0/1
    prec_w: np.ndarray  # (n_tasks, n_tasks) wait / horizon

    @property
    def n_agents(self) -> int:
        return self.agent_x.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.task_x.shape[0]

    def arrays(self) -> dict:
        return {"agent_x": self.agent_x, "task_x": self.task_x, "edge_x": self.edge_x,
                "prec": self.prec, "prec_w": self.prec_w}

    def __eq__(self, other):
        if not isinstance(other, GraphInput):
            return NotImplemented
        a, b = self.arrays(), other.arrays()
        return all(np.array_equal(a[k], b[k]) for k in a)

    __hash__ = None


def encode(inst: Instance, tt: TravelTimes) -> GraphInput:
    """Features for agents, tasks and edges; every time is divided by the horizon."""
    h = inst.horizon
    W, H = inst.workspace
    v = inst.velocities
    O = inst.precedence.astype(float)
    nt = inst.n_tasks
    agent_x = np.column_stack([
        v / v.max(),
        [a.start_position[0] / W for a in inst.agents],
        [a.start_position[1] / H for a in inst.agents],
        tt.from_start.mean(axis=1) / h,
    ])
    deg_norm = max(1, nt - 1)
    task_x = np.column_stack([
        [t.position[0] / W for t in inst.tasks],
        [t.position[1] / H for t in inst.tasks],
        inst.window_start / h,
        inst.window_end / h,
        O.sum(axis=0) / deg_norm,
        O.sum(axis=1) / deg_norm,
        inst.durations.mean(axis=0) / h,
    ])
    edge_x = np.stack([tt.from_start / h, inst.durations / h], axis=-1)
    clip = lambda a: np.clip(a, -FEATURE_CLIP, FEATURE_CLIP)  # noqa: E731
    return GraphInput(clip(agent_x), clip(task_x), clip(edge_x), O, clip(inst.wait / h))


# --------------------------------------------------------------------------
# network


def _param_shapes(hidden: int, rounds: int) -> dict[str, tuple]:
    H = hidden
    shapes = {"Wa0": (AGENT_FEATURES, H), "ea_b": (H,), "Wt0": (TASK_FEATURES, H), "et_b": (H,)}
    for l in range(rounds):
        shapes.update({
            f"P{l}": (H, H), f"Q{l}": (EDGE_FEATURES, H), f"bp{l}": (H,),
            f"R{l}": (H, H), f"S{l}": (EDGE_FEATURES, H), f"br{l}": (H,),
            f"G{l}": (H, H), f"g{l}": (H,), f"bg{l}": (H,),
            f"F{l}": (H, H), f"f{l}": (H,), f"bf{l}": (H,),
            f"Ut{l}": (H, H), f"Vt{l}": (H, H), f"Zp{l}": (H, H), f"Zs{l}": (H, H),
            f"bt{l}": (H,),
            f"Ua{l}": (H, H), f"Va{l}": (H, H), f"ba{l}": (H,),
        })
    shapes.update({"Ra": (H, H), "Rt": (H, H), "Re": (EDGE_FEATURES, H), "brd": (H,),
                   "w": (H,)})
    return shapes


@dataclass
class PolicyNet:
    hidden: int = 64
    rounds: int = 2
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.params:
            rng = np.random.default_rng(self.seed)
            for name, shape in _param_shapes(self.hidden, self.rounds).items():
                if len(shape) == 1:
                    self.params[name] = (rng.standard_normal(shape) / math.sqrt(self.hidden)
                                         if name == "w" else np.zeros(shape))
                else:
                    self.params[name] = rng.standard_normal(shape) / math.sqrt(shape[0])
        expected = _param_shapes(self.hidden, self.rounds)
        if set(expected) != set(self.params):
            raise DimensionMismatch("parameter names do not match (hidden, rounds)")
        for k, shape in expected.items():
            self.params[k] = np.asarray(self.params[k], dtype=float)
            if self.params[k].shape != shape:
                raise DimensionMismatch(f"{k}: shape {self.params[k].shape} != {shape}")

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "PolicyNet":
        return PolicyNet(self.hidden, self.rounds, self.seed,
                         {k: v.copy() for k, v in self.params.items()})

    def zero_readout(self) -> None:
        self.params["w"][:] = 0.0


def _check_dims(g: GraphInput):
    if (g.agent_x.shape[1] != AGENT_FEATURES or g.task_x.shape[1] != TASK_FEATURES
            or g.edge_x.shape != (g.n_agents, g.n_tasks, EDGE_FEATURES)
            or g.prec.shape != (g.n_tasks, g.n_tasks)):
        raise DimensionMismatch("graph features do not match the network input sizes")


def _forward(net: PolicyNet, g: GraphInput):
    """Scores of shape (n_tasks, n_agents) plus the cache needed by ``_backward``."""
    _check_dims(g)
    p = net.params
    na, nt = g.n_agents, g.n_tasks
    ea, O, ew = g.edge_x, g.prec, g.prec_w
    din = np.maximum(1.0, O.sum(axis=0))  # predecessors per task
    dout = np.maximum(1.0, O.sum(axis=1))  # successors per task
    ha = np.tanh(g.agent_x @ p["Wa0"] + p["ea_b"])
    ht = np.tanh(g.task_x @ p["Wt0"] + p["et_b"])
    rounds = []
    for l in range(net.rounds):
        Mat = np.tanh((ha @ p[f"P{l}"])[:, None, :] + ea @ p[f"Q{l}"] + p[f"bp{l}"])
        mt = Mat.mean(axis=0)
        Mta = np.tanh((ht @ p[f"R{l}"])[None, :, :] + ea @ p[f"S{l}"] + p[f"br{l}"])
        ma = Mta.mean(axis=1)
        Mp = np.tanh((ht @ p[f"G{l}"])[:, None, :] + ew[:, :, None] * p[f"g{l}"] + p[f"bg{l}"])
        mp = np.einsum("jk,jkh->kh", O, Mp) / din[:, None]
        Ms = np.tanh((ht @ p[f"F{l}"])[None, :, :] + ew[:, :, None] * p[f"f{l}"] + p[f"bf{l}"])
        ms = np.einsum("jk,jkh->jh", O, Ms) / dout[:, None]
        ht_new = np.tanh(ht @ p[f"Ut{l}"] + mt @ p[f"Vt{l}"] + mp @ p[f"Zp{l}"]
                         + ms @ p[f"Zs{l}"] + p[f"bt{l}"])
        ha_new = np.tanh(ha @ p[f"Ua{l}"] + ma @ p[f"Va{l}"] + p[f"ba{l}"])
        rounds.append(dict(ha=ha, ht=ht, Mat=Mat, mt=mt, Mta=Mta, ma=ma, Mp=Mp, mp=mp,
                           Ms=Ms, ms=ms, ht_new=ht_new, ha_new=ha_new))
        ha, ht = ha_new, ht_new
    Z = np.tanh((ha @ p["Ra"])[:, None, :] + (ht @ p["Rt"])[None, :, :] + ea @ p["Re"]
                + p["brd"])
    scores = (Z @ p["w"]).T
    cache = dict(g=g, ha0=rounds[0]["ha"] if rounds else ha, ht0=rounds[0]["ht"] if rounds else ht,
                 rounds=rounds, ha=ha, ht=ht, Z=Z, din=din, dout=dout)
    return scores, cache


def _backward(net: PolicyNet, cache, dscores: np.ndarray) -> dict:
    p = net.params
    g = cache["g"]
    ea, O, ew = g.edge_x, g.prec, g.prec_w
    na, nt = g.n_agents, g.n_tasks
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    Z, ha, ht = cache["Z"], cache["ha"], cache["ht"]
    dsT = dscores.T  # (na, nt)
    grads["w"] = np.einsum("ik,ikh->h", dsT, Z)
    dpre = dsT[:, :, None] * p["w"] * (1.0 - Z * Z)
    grads["brd"] = dpre.sum(axis=(0, 1))
    d_haR = dpre.sum(axis=1)
    d_htR = dpre.sum(axis=0)
    grads["Ra"] = ha.T @ d_haR
    grads["Rt"] = ht.T @ d_htR
    grads["Re"] = np.einsum("ikf,ikh->fh", ea, dpre)
    dha = d_haR @ p["Ra"].T
    dht = d_htR @ p["Rt"].T
    din, dout = cache["din"], cache["dout"]
    for l in reversed(range(net.rounds)):
        c = cache["rounds"][l]
        ha_in, ht_in = c["ha"], c["ht"]
        dpt = dht * (1.0 - c["ht_new"] ** 2)
        grads[f"bt{l}"] = dpt.sum(axis=0)
        grads[f"Ut{l}"] = ht_in.T @ dpt
        grads[f"Vt{l}"] = c["mt"].T @ dpt
        grads[f"Zp{l}"] = c["mp"].T @ dpt
        grads[f"Zs{l}"] = c["ms"].T @ dpt
        dht_in = dpt @ p[f"Ut{l}"].T
        dmt = dpt @ p[f"Vt{l}"].T
        dmp = dpt @ p[f"Zp{l}"].T
        dms = dpt @ p[f"Zs{l}"].T
        dpa = dha * (1.0 - c["ha_new"] ** 2)
        grads[f"ba{l}"] = dpa.sum(axis=0)
        grads[f"Ua{l}"] = ha_in.T @ dpa
        grads[f"Va{l}"] = c["ma"].T @ dpa
        dha_in = dpa @ p[f"Ua{l}"].T
        dma = dpa @ p[f"Va{l}"].T
        # agent -> task messages, averaged over agents
        Mat = c["Mat"]
        dpre = (dmt[None, :, :] / na) * (1.0 - Mat * Mat)
        grads[f"bp{l}"] = dpre.sum(axis=(0, 1))
        grads[f"Q{l}"] = np.einsum("ikf,ikh->fh", ea, dpre)
        s_i = dpre.sum(axis=1)
        grads[f"P{l}"] = ha_in.T @ s_i
        dha_in += s_i @ p[f"P{l}"].T
        # task -> agent messages, averaged over tasks
        Mta = c["Mta"]
        dpre = (dma[:, None, :] / nt) * (1.0 - Mta * Mta)
        grads[f"br{l}"] = dpre.sum(axis=(0, 1))
        grads[f"S{l}"] = np.einsum("ikf,ikh->fh", ea, dpre)
        s_k = dpre.sum(axis=0)
        grads[f"R{l}"] = ht_in.T @ s_k
        dht_in += s_k @ p[f"R{l}"].T
        # predecessor messages j -> k
        Mp = c["Mp"]
        dpre = (O[:, :, None] * (dmp / din[:, None])[None, :, :]) * (1.0 - Mp * Mp)
        grads[f"bg{l}"] = dpre.sum(axis=(0, 1))
        grads[f"g{l}"] = np.einsum("jk,jkh->h", ew, dpre)
        s_j = dpre.sum(axis=1)
        grads[f"G{l}"] = ht_in.T @ s_j
        dht_in += s_j @ p[f"G{l}"].T
        # successor messages k -> j
        Ms = c["Ms"]
        dpre = (O[:, :, None] * (dms / dout[:, None])[:, None, :]) * (1.0 - Ms * Ms)
        grads[f"bf{l}"] = dpre.sum(axis=(0, 1))
        grads[f"f{l}"] = np.einsum("jk,jkh->h", ew, dpre)
        s_k = dpre.sum(axis=0)
        grads[f"F{l}"] = ht_in.T @ s_k
        dht_in += s_k @ p[f"F{l}"].T
        dha, dht = dha_in, dht_in
    ha0, ht0 = cache["ha0"], cache["ht0"]
    dpa = dha * (1.0 - ha0 * ha0)
    grads["Wa0"] = g.agent_x.T @ dpa
    grads["ea_b"] = dpa.sum(axis=0)
    dpt = dht * (1.0 - ht0 * ht0)
    grads["Wt0"] = g.task_x.T @ dpt
    grads["et_b"] = dpt.sum(axis=0)
    return grads


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def forward(net: PolicyNet, g: GraphInput) -> np.ndarray:
    """Per-task assignment distribution, shape ``(n_tasks, n_agents)``."""
    scores, _ = _forward(net, g)
    return _softmax(scores)


def loss_and_grad(net: PolicyNet, g: GraphInput, labels, weight: float = 1.0):
    """Mean per-task cross-entropy against ``labels`` and its gradient (times ``weight``)."""
    labels = np.asarray(labels, dtype=np.int64)
    scores, cache = _forward(net, g)
    probs = _softmax(scores)
    nt = g.n_tasks
    if labels.shape != (nt,) or labels.min() < 0 or labels.max() >= g.n_agents:
        raise DimensionMismatch("one label in [0, n_agents) per task required")
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(np.mean(logp[np.arange(nt), labels]))
    dscores = probs.copy()
    dscores[np.arange(nt), labels] -= 1.0
    dscores *= weight / nt
    return loss, probs, _backward(net, cache, dscores)


def _ce_loss(net, g: GraphInput, labels) -> float:
    scores, _ = _forward(net, g)
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return logp[np.arange(len(labels)), labels].mean()


def gradient_check(net: PolicyNet, g: GraphInput, labels, n_samples: int = 100,
                   step: float = 1e-5, seed: int = 0, grads: Optional[dict] = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    One entry of every tensor is always sampled, the rest uniformly at random.
    The finite differences are evaluated in extended precision so that their
    roundoff stays well below the tolerance even for tiny gradients.
    ``grads`` replaces the analytic gradient (used to test that corrupted
    gradients are detected).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if grads is None:
        _, _, grads = loss_and_grad(net, g, labels)
    ext = np.longdouble
    shadow = copy.copy(net)
    shadow.params = {k: v.astype(ext) for k, v in net.params.items()}
    g_ext = GraphInput(*(a.astype(ext) for a in g.arrays().values()))
    rng = np.random.default_rng(seed)
    names = sorted(net.params)
    sizes = np.array([net.params[k].size for k in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    picks = {int(offsets[t] + rng.integers(sizes[t])) for t in range(len(names))}
    for fi in rng.permutation(int(sizes.sum())):
        if len(picks) >= max(n_samples, len(names)):
            break
        picks.add(int(fi))
    worst = 0.0
    for fi in sorted(picks):
        t = int(np.searchsorted(offsets, fi, side="right") - 1)
        name, pos = names[t], fi - offsets[t]
        arr = shadow.params[name].reshape(-1)
        old = arr[pos]
        arr[pos] = old + ext(step)
        lp = -_ce_loss(shadow, g_ext, labels)
        arr[pos] = old - ext(step)
        lm = -_ce_loss(shadow, g_ext, labels)
        arr[pos] = old
        numeric = float((lp - lm) / (2 * ext(step)))
        analytic = float(grads[name].reshape(-1)[pos])
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# --------------------------------------------------------------------------
# decoding


def decode_order(inst: Instance) -> list[int]:
    """Tasks in topological order, earliest window end first among ready tasks."""
    O = inst.precedence
    nt = inst.n_tasks
    if topological_order(O) is None:
        raise ValueError("precedence graph has a cycle")
    indeg = O.sum(axis=0).astype(int)
    done = np.zeros(nt, dtype=bool)
    order = []
    for _ in range(nt):
        ready = [k for k in range(nt) if not done[k] and indeg[k] == 0]
        k = min(ready, key=lambda k: (inst.tasks[k].window_end, k))
        order.append(k)
        done[k] = True
        indeg -= O[k].astype(int)
    return order


def decode(probs: np.ndarray, inst: Instance, tt: TravelTimes | None = None,
           sample: bool = False, rng: Optional[np.random.Generator] = None):
    """Turn a distribution into a candidate; returns ``(candidate, chosen_agents)``.

    Argmax mode picks the lowest agent index among ties. Sampling mode draws
    from each task's distribution using ``rng``.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (inst.n_tasks, inst.n_agents):
        raise DimensionMismatch(f"probs shape {probs.shape} does not match the instance")
    if sample and rng is None:
        raise ValueError("sampling decode needs an rng")
    orders: list[list[int]] = [[] for _ in range(inst.n_agents)]
    chosen = np.zeros(inst.n_tasks, dtype=np.int64)
    for k in decode_order(inst):
        if sample:
            pk = probs[k] / probs[k].sum()
            i = int(rng.choice(inst.n_agents, p=pk))
        else:
            i = int(np.argmax(probs[k]))
        chosen[k] = i
        orders[i].append(k)
    return CandidateSchedule.from_orders(orders, inst.n_tasks), chosen


def predict(net: PolicyNet, inst: Instance, tt: TravelTimes) -> CandidateSchedule:
    return decode(forward(net, encode(inst, tt)), inst, tt)[0]


# --------------------------------------------------------------------------
# optimisation


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        if lr == 0.0:
            return
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, gk in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * gk
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * gk * gk
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class ExpertExample:
    instance_id: str
    graph: GraphInput
    labels: np.ndarray  # agent index per task


def expert_examples(instances, solver_opts=None) -> tuple[list[ExpertExample], list[str]]:
    """Label each ``(name, inst, tt)`` with the exact solver's assignment.

    Instances the solver does not close to optimality are skipped; their
    names are returned second.
    """
    from .bnb import SolveOptions, SolveStatus, solve_instance

    solver_opts = solver_opts or SolveOptions()
    examples, skipped = [], []
    for name, inst, tt in instances:
        res = solve_instance(inst, tt, solver_opts)
        if res.status is not SolveStatus.OPTIMAL:
            log.warning("skipping %s: status %s", name, res.status.value)
            skipped.append(name)
            continue
        examples.append(ExpertExample(name, encode(inst, tt), res.schedule.candidate.agent_of()))
    return examples, skipped


@dataclass
class BCParams:
    lr: float = 3e-3
    epochs: int = 150
    batch_size: int = 8
    lr_floor: float = 0.05  # cosine decay from lr to lr * lr_floor
    clip_norm: float = 1.0  # global gradient-norm clip per step, 0 disables
    weight_decay: float = 0.0  # decoupled L2 shrink per step, scaled by lr
    feature_noise: float = 0.1  # std of Gaussian jitter on node and edge features
    hidden: int = 64
    rounds: int = 2
    seed: int = 0


@dataclass
class TrainResult:
    net: PolicyNet
    losses: list[float]
    accuracies: list[float]
    smoothed_nonincreasing: bool


def accuracy(net: PolicyNet, examples: Sequence[ExpertExample]) -> float:
    hits = total = 0
    for ex in examples:
        pred = np.argmax(forward(net, ex.graph), axis=1)
        hits += int((pred == ex.labels).sum())
        total += len(ex.labels)
    return hits / total if total else 0.0


def _smoothed_nonincreasing(losses, window=5, slack=1e-3) -> bool:
    if len(losses) < 2 * window:
        return True
    sm = np.convolve(losses, np.ones(window) / window, mode="valid")[::window]
    return bool(np.all(np.diff(sm) <= slack * max(1.0, abs(sm[0]))))


def clip_grads(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place to global norm ``max_norm``; returns the original norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def bc_train(examples: Sequence[ExpertExample], hp: BCParams = BCParams(),
             net: Optional[PolicyNet] = None) -> TrainResult:
    """Minimize mean per-task cross-entropy to the expert labels.

    Adam on mini-batches, cosine learning-rate decay, global-norm clipping.
    """
    if not examples:
        raise ValueError("empty dataset")
    net = net.copy() if net is not None else PolicyNet(hp.hidden, hp.rounds, hp.seed)
    opt = Adam(net.params, hp.lr)
    rng = np.random.default_rng(hp.seed)
    losses, accs = [], []
    for epoch in range(hp.epochs):
        decay = 0.5 * (1.0 + math.cos(math.pi * epoch / max(1, hp.epochs)))
        lr = hp.lr * (hp.lr_floor + (1.0 - hp.lr_floor) * decay)
        order = rng.permutation(len(examples))
        total = 0.0
        hits = n = 0
        for b0 in range(0, len(order), hp.batch_size):
            batch = order[b0:b0 + hp.batch_size]
            acc_grads = None
            for idx in batch:
                ex = examples[idx]
                g = ex.graph
                if hp.feature_noise > 0.0:
                    jitter = lambda a: a + hp.feature_noise * rng.standard_normal(a.shape)  # noqa: E731
                    g = GraphInput(jitter(g.agent_x), jitter(g.task_x), jitter(g.edge_x),
                                   g.prec, g.prec_w)
                loss, probs, grads = loss_and_grad(net, g, ex.labels, weight=1.0 / len(batch))
                total += loss
                hits += int((np.argmax(probs, axis=1) == ex.labels).sum())
                n += len(ex.labels)
                if acc_grads is None:
                    acc_grads = grads
                else:
                    for k in acc_grads:
                        acc_grads[k] += grads[k]
            clip_grads(acc_grads, hp.clip_norm)
            opt.step(net.params, acc_grads, lr)
            if hp.weight_decay > 0.0:
                for v in net.params.values():
                    v *= 1.0 - lr * hp.weight_decay
        mean_loss = total / len(examples)
        if not np.isfinite(mean_loss) or not all(np.isfinite(v).all() for v in net.params.values()):
            raise DivergenceDetected(f"non-finite loss or parameters at epoch {epoch}")
        losses.append(mean_loss)
        accs.append(hits / n)
        log.debug("epoch %d loss %.4f acc %.3f", epoch, mean_loss, hits / n)
    return TrainResult(net, losses, accs, _smoothed_nonincreasing(losses))


# --------------------------------------------------------------------------
# reinforcement fine-tuning


@dataclass
class RLParams:
    lr: float = 1e-3
    episodes: int = 200
    baseline_window: int = 32
    seed: int = 0
    time_measure: str = "wall"  # "wall" seconds or "nodes" explored, both cold-normalized


@dataclass
class RLResult:
    net: PolicyNet
    rewards: list[float]
    score_rewards: list[float]
    time_rewards: list[float]
    accepted: list[bool]


def rl_finetune(net: PolicyNet, instances: Sequence[tuple[Instance, TravelTimes]],
                solver_opts=None, alpha: float = 1.0, beta: float = 1.0,
                hp: RLParams = RLParams()) -> RLResult:
    """REINFORCE with a moving-average baseline.

    Each episode samples a candidate from the policy, solves the instance with
    it as warm start and rewards ``alpha * r_score + beta * r_time`` where
    ``r_time = -(optimization time) / (cold optimization time)``; the cold
    time is measured once per instance.
    """
    from .bnb import SolveOptions, solve_instance
    from .schedule import r_score

    if not instances:
        raise ValueError("no instances")
    if hp.time_measure not in ("wall", "nodes"):
        raise ValueError("time_measure must be 'wall' or 'nodes'")
    solver_opts = solver_opts or SolveOptions()
    net = net.copy()
    opt = Adam(net.params, hp.lr)
    rng = np.random.default_rng(hp.seed)
    graphs = [encode(inst, tt) for inst, tt in instances]
    cold: dict[int, float] = {}

    def cost(res):
        return res.total_time if hp.time_measure == "wall" else float(res.nodes_explored)

    rewards, r_scores, r_times, accepted = [], [], [], []
    for ep in range(hp.episodes):
        idx = ep % len(instances)
        inst, tt = instances[idx]
        if idx not in cold:
            cold[idx] = max(cost(solve_instance(inst, tt, solver_opts)), 1e-9)
        scores, cache = _forward(net, graphs[idx])
        probs = _softmax(scores)
        cand, chosen = decode(probs, inst, tt, sample=True, rng=rng)
        res = solve_instance(inst, tt, solver_opts, warm_start=cand)
        rs = r_score(res.schedule) if res.schedule is not None else 0.0
        rt = -cost(res) / cold[idx]
        reward = alpha * rs + beta * rt
        if not np.isfinite(reward):
            raise DivergenceDetected(f"non-finite reward at episode {ep}")
        recent = rewards[-hp.baseline_window:]
        # mean centered on the oldest entry so a constant window is reproduced exactly
        baseline = (recent[0] + math.fsum(r - recent[0] for r in recent) / len(recent)
                    if recent else reward)
        advantage = reward - baseline
        # ascend advantage * log pi(chosen): gradient of -advantage * sum log p
        nt = len(chosen)
        dscores = probs.copy()
        dscores[np.arange(nt), chosen] -= 1.0
        dscores *= advantage / nt
        if advantage != 0.0:
            opt.step(net.params, _backward(net, cache, dscores))
        if not all(np.isfinite(v).all() for v in net.params.values()):
            raise DivergenceDetected(f"non-finite parameters at episode {ep}")
        rewards.append(float(reward))
        r_scores.append(float(rs))
        r_times.append(float(rt))
        accepted.append(bool(res.warm_start_accepted))
    return RLResult(net, rewards, r_scores, r_times, accepted)


# --------------------------------------------------------------------------
# persistence


def save_checkpoint(net: PolicyNet, path, extra: Optional[dict] = None) -> None:
    meta = {"version": CHECKPOINT_VERSION, "hidden": net.hidden, "rounds": net.rounds,
            "seed": net.seed, "extra": extra or {}}
    with open(Path(path), "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **net.params)


def load_checkpoint(path) -> PolicyNet:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        params = {k: z[k].copy() for k in z.files if k != "__meta__"}
    return PolicyNet(meta["hidden"], meta["rounds"], meta["seed"], params)


def example_to_dict(ex: ExpertExample) -> dict:
    return {"instance_id": ex.instance_id, "labels": ex.labels.tolist(),
            "graph": {k: v.tolist() for k, v in ex.graph.arrays().items()}}


def example_from_dict(d: dict) -> ExpertExample:
    gd = d["graph"]
    g = GraphInput(*(np.array(gd[k], dtype=float) for k in
                     ("agent_x", "task_x", "edge_x", "prec", "prec_w")))
    labels = np.array(d["labels"], dtype=np.int64)
    if labels.shape != (g.n_tasks,) or (labels < 0).any() or (labels >= g.n_agents).any():
        raise ValueError(f"example {d.get('instance_id')}: labels out of range")
    return ExpertExample(str(d["instance_id"]), g, labels)


def save_dataset(examples: Sequence[ExpertExample], path) -> None:
    doc = {"schema_version": 1, "examples": [example_to_dict(e) for e in examples]}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_dataset(path) -> list[ExpertExample]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != 1:
        raise ValueError("unsupported dataset schema_version")
    return [example_from_dict(d) for d in doc["examples"]]


def hyperparams_dict(hp) -> dict:
    return asdict(hp)
