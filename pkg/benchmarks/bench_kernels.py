"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--instances 5] [--candidates 200] [--repeats 3]

Times the schedule simulation recurrence over random candidates and the root
LP relaxation solve, once per backend, and checks the results are identical.
"""

import argparse
import sys
import time

import numpy as np

from warmsched import _pykernels, kernels, milp_model, simplex
from warmsched.instance import GenConfig, generate
from warmsched.motion import compute_travel_times
from warmsched.schedule import CandidateSchedule, simulate


def _best_of(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=5)
    ap.add_argument("--candidates", type=int, default=200, help="random candidates per instance")
    ap.add_argument("--repeats", type=int, default=3, help="best-of repeats per measurement")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.compiled_backend is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    backends = {"python": _pykernels, "compiled": kernels.compiled_backend}
    rng = np.random.default_rng(args.seed)
    cfg = GenConfig()
    work = []
    for s in range(args.seed, args.seed + args.instances):
        inst = generate(cfg, s)
        tt = compute_travel_times(inst)
        cands = []
        for _ in range(args.candidates):
            agent = rng.integers(0, inst.n_agents, inst.n_tasks)
            orders = [rng.permutation(np.flatnonzero(agent == i)).tolist()
                      for i in range(inst.n_agents)]
            cands.append(CandidateSchedule.from_orders(orders, inst.n_tasks))
        work.append((inst, tt, cands, simplex.from_model(milp_model.build(inst, tt))))

    times = {}
    results = {}
    for name, be in backends.items():
        sim_t, sim = _best_of(lambda: [simulate(i, tt, c, backend=be).finish
                                       for i, tt, cs, _ in work for c in cs], args.repeats)
        lp_t, lp = _best_of(lambda: [simplex.solve_lp(p, backend=be) for *_, p in work],
                            args.repeats)
        times[name] = (sim_t, lp_t)
        results[name] = (sim, [(r.iterations, r.x) for r in lp])

    py, cc = results["python"], results["compiled"]
    same = (all(np.array_equal(a, b) for a, b in zip(py[0], cc[0]))
            and all(a[0] == b[0] and np.array_equal(a[1], b[1]) for a, b in zip(py[1], cc[1])))
    n_sim = args.instances * args.candidates
    print(f"{args.instances} instances ({cfg.n_agents}x{cfg.n_tasks}), {n_sim} simulations, "
          f"{args.instances} root LPs, best of {args.repeats}")
    print(f"{'kernel':10s} {'python_s':>10s} {'compiled_s':>11s} {'speedup':>8s}")
    for k, label in enumerate(("simulate", "simplex")):
        p, c = times["python"][k], times["compiled"][k]
        print(f"{label:10s} {p:10.4f} {c:11.4f} {p / c:8.2f}")
    print(f"results identical: {str(same).lower()}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
