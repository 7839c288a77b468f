"""``warmsched`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 infeasible,
4 internal solver failure. Every command accepts ``--config FILE`` (JSON whose
keys are the long flag names with dashes as underscores); explicit flags
override it. Each run writes ``<command>_config.json`` next to its outputs,
which can be fed back through ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__, bench, heuristics, policy
from .bnb import SolveOptions, SolverFailure, solve_instance
from .instance import (GenConfig, GenerationFailed, ParseError, SchemaVersionMismatch, generate,
                       load, save)
from .motion import RoadmapDisconnected, compute_travel_times
from .schedule import write_schedule

log = logging.getLogger("warmsched")

OUT_ENV = "WARMSCHED_OUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_FAILURE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def default_out_dir() -> str:
    return os.environ.get(OUT_ENV, "warmsched_out")


def _write_echo(out_dir: Path, command: str, args: argparse.Namespace, extra: dict | None = None):
    out_dir.mkdir(parents=True, exist_ok=True)
    d = {k: v for k, v in vars(args).items() if k not in ("func", "config", "verbose")}
    d.update(extra or {})
    doc = {"command": command, "version": __version__, **d}
    (out_dir / f"{command.replace('-', '_')}_config.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n")


def _instance_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"not a directory: {d}")
    return sorted(d.glob("*.json"), key=lambda p: p.name)


def _load_instances(directory):
    out = []
    for p in _instance_files(directory):
        if p.name.endswith("_config.json"):
            continue
        inst = load(p)
        out.append(bench.BenchInstance(p.stem, inst, compute_travel_times(inst)))
    return out


def _solve_opts(args) -> SolveOptions:
    return SolveOptions(time_limit=args.time_limit, node_limit=args.node_limit,
                        trace=getattr(args, "trace", False))


# --------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    raw = dict(args.generator or {})
    try:
        cfg = GenConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid generator config: {exc}") from exc
    problems = cfg.check()
    if problems:
        raise UsageError("invalid generator config: " + "; ".join(problems))
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    out = Path(args.out_dir or default_out_dir())
    out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.count):
        try:
            inst = generate(cfg, seed)
        except GenerationFailed as exc:
            raise UsageError(f"seed {seed}: {exc}") from exc
        save(inst, out / f"instance_{seed:06d}.json")
    args.generator = cfg.to_dict()
    _write_echo(out, "gen", args)
    print(f"wrote {args.count} instances to {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    if args.warm == "policy" and not args.checkpoint:
        raise UsageError("--warm policy requires --checkpoint")
    inst = load(args.instance)
    tt = compute_travel_times(inst)
    warm = None
    if args.warm == "edf":
        warm = heuristics.edf(inst, tt)
    elif args.warm == "ca-edf":
        warm = heuristics.constraint_aware_edf(inst, tt)
    elif args.warm == "policy":
        warm = policy.predict(policy.load_checkpoint(args.checkpoint), inst, tt)
    res = solve_instance(inst, tt, _solve_opts(args), warm_start=warm)
    print(f"status={res.status.value}")
    print(f"objective={res.objective:.6g}")
    print(f"bound={res.bound:.6g}")
    print(f"nodes={res.nodes_explored}")
    print(f"lp_iterations={res.lp_iterations_total}")
    print(f"warm_start_accepted={str(res.warm_start_accepted).lower()}")
    for v in res.rejection:
        print(f"rejection={v}")
    print(f"search_time_s={res.search_time:.6g}")
    print(f"validation_time_s={res.validation_time:.6g}")
    print(f"total_time_s={res.total_time:.6g}")
    print(f"build_time_s={res.build_time:.6g}")
    for line in res.trace:
        print(line)
    if args.out and res.schedule is not None:
        write_schedule(res.schedule, args.out)
    return EXIT_INFEASIBLE if res.schedule is None else EXIT_OK


def cmd_expert_gen(args) -> int:
    instances = _load_instances(args.instances_dir)
    if not instances:
        log.warning("no instance files in %s; writing an empty dataset", args.instances_dir)
    examples, _ = policy.expert_examples([(b.name, b.inst, b.tt) for b in instances],
                                         _solve_opts(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    policy.save_dataset(examples, out)
    _write_echo(out.parent, "expert-gen", args)
    print(f"wrote {len(examples)} examples to {out}")
    return EXIT_OK


def cmd_train_bc(args) -> int:
    examples = policy.load_dataset(args.dataset)
    if not examples:
        raise UsageError(f"dataset {args.dataset} is empty")
    hp = policy.BCParams(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                         hidden=args.hidden, rounds=args.rounds, seed=args.seed)
    result = policy.bc_train(examples, hp)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    policy.save_checkpoint(result.net, out, extra={"bc": asdict(hp)})
    curve = out.with_name(out.stem + "_loss.csv")
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "accuracy"])
        for e, (l, a) in enumerate(zip(result.losses, result.accuracies)):
            w.writerow([e, f"{l:.6g}", f"{a:.6g}"])
    _write_echo(out.parent, "train-bc", args)
    print(f"final loss {result.losses[-1]:.6g}, training accuracy {result.accuracies[-1]:.4f}")
    if not result.smoothed_nonincreasing:
        log.warning("smoothed training loss increased; possible divergence")
    return EXIT_OK


def cmd_train_rl(args) -> int:
    net = policy.load_checkpoint(args.checkpoint)
    instances = [(b.inst, b.tt) for b in _load_instances(args.instances_dir)]
    if not instances:
        raise UsageError(f"no instances in {args.instances_dir}")
    hp = policy.RLParams(lr=args.lr, episodes=args.episodes, seed=args.seed,
                         baseline_window=args.baseline_window, time_measure=args.time_measure)
    result = policy.rl_finetune(net, instances, _solve_opts(args), alpha=args.alpha,
                                beta=args.beta, hp=hp)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    policy.save_checkpoint(result.net, out, extra={"rl": asdict(hp), "alpha": args.alpha,
                                                   "beta": args.beta})
    curve = out.with_name(out.stem + "_reward.csv")
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "reward", "r_score", "r_time", "warm_start_accepted"])
        for e, row in enumerate(zip(result.rewards, result.score_rewards, result.time_rewards,
                                    result.accepted)):
            w.writerow([e, *(f"{v:.6g}" for v in row[:3]), str(row[3]).lower()])
    _write_echo(out.parent, "train-rl", args)
    n = min(50, len(result.rewards))
    print(f"mean reward first {n}: {sum(result.rewards[:n]) / n:.6g}, "
          f"last {n}: {sum(result.rewards[-n:]) / n:.6g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    methods = [m.strip().replace("-", "_") for m in args.methods.split(",") if m.strip()]
    try:
        methods = [bench.MethodId(m) for m in methods]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    nets = {}
    for m, path in ((bench.MethodId.BC_ONLY, args.bc_checkpoint),
                    (bench.MethodId.BC_RL, args.rl_checkpoint)):
        if m in methods:
            if not path:
                raise UsageError(f"method {m.value} needs its checkpoint flag")
            nets[m] = policy.load_checkpoint(path)
    instances = _load_instances(args.instances_dir)
    if not instances:
        raise UsageError(f"no instances in {args.instances_dir}")
    jobs = 1 if args.timing_strict else args.jobs
    out = Path(args.out_dir or default_out_dir())
    _write_echo(out, "bench", args)
    report = bench.run_benchmark(instances, methods, args.repeats, _solve_opts(args), nets,
                                 jobs=jobs, config=vars(args))
    bench.emit_report(report, out)
    _print_summary(report)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for d in bench.read_raw(args.raw):
        f = lambda k: float(d[k])  # noqa: E731
        rows.append(bench.BenchRow(d["method"], d["instance"], int(d["repeat"]), d["status"],
                                   f("objective"), f("quality_score"), f("search_time_s"),
                                   f("validation_time_s"), f("total_time_s"), int(d["nodes"])))
    methods = list(dict.fromkeys(r.method for r in rows))
    stats = [bench.aggregate(m, [r for r in rows if r.method == m]) for m in methods]
    for s in stats:  # acceptance flags are not part of the raw file
        s.warm_start_accept_rate = float("nan")
    report = bench.BenchReport(stats, rows)
    out = Path(args.out_dir or default_out_dir())
    bench.emit_report(report, out)
    _write_echo(out, "report", args)
    _print_summary(report)
    return EXIT_OK


def _print_summary(report):
    print(f"{'method':10s} {'n':>4s} {'excl':>4s} {'total_s':>10s} {'std':>10s} "
          f"{'quality':>8s} {'accept':>7s}")
    for s in report.stats:
        print(f"{s.method:10s} {s.n:4d} {s.excluded:4d} {s.mean_total_time_s:10.4g} "
              f"{s.std_total_time_s:10.4g} {s.mean_quality_score:8.4g} "
              f"{s.warm_start_accept_rate:7.3g}")


# --------------------------------------------------------------------------
# parser


def _add_solver_flags(p, time_limit=600.0):
    p.add_argument("--time-limit", type=float, default=time_limit, help="seconds per solve")
    p.add_argument("--node-limit", type=int, default=1_000_000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="warmsched", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file of flag defaults (e.g. a config echo)")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "generate instance files")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="first seed; files are named by seed")
    p.add_argument("--out-dir", default=None, help=f"default ${OUT_ENV} or ./warmsched_out")
    p.set_defaults(generator=None)

    p = add("solve", cmd_solve, "solve one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--warm", choices=["none", "edf", "ca-edf", "policy"], default="none")
    p.add_argument("--checkpoint")
    p.add_argument("--trace", action="store_true")
    p.add_argument("--out", help="write the schedule as CSV")
    _add_solver_flags(p)

    p = add("expert-gen", cmd_expert_gen, "label instances with exact solutions")
    p.add_argument("--instances-dir", required=True)
    p.add_argument("--out", required=True)
    _add_solver_flags(p, 120.0)

    d = policy.BCParams()
    p = add("train-bc", cmd_train_bc, "behavior cloning on an expert dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--rounds", type=int, default=d.rounds)
    p.add_argument("--seed", type=int, default=d.seed)

    r = policy.RLParams()
    p = add("train-rl", cmd_train_rl, "policy-gradient fine-tuning against the solver")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=r.episodes)
    p.add_argument("--lr", type=float, default=r.lr)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--baseline-window", type=int, default=r.baseline_window)
    p.add_argument("--time-measure", choices=["wall", "nodes"], default=r.time_measure)
    p.add_argument("--seed", type=int, default=r.seed)
    _add_solver_flags(p, 120.0)

    p = add("bench", cmd_bench, "run the method comparison")
    p.add_argument("--instances-dir", required=True)
    p.add_argument("--methods", default="baseline,edf,ca_edf,bc_only,bc_rl")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--bc-checkpoint")
    p.add_argument("--rl-checkpoint")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing-strict", action="store_true",
                   help="run rows one at a time so timings do not share cores")
    p.add_argument("--out-dir", default=None)
    _add_solver_flags(p)

    p = add("report", cmd_report, "recompute summary.csv from a raw.csv")
    p.add_argument("--raw", required=True)
    p.add_argument("--out-dir", default=None)
    return ap


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from the ``--config`` file, if any.

    Flags on the command line override the config; required flags may come
    from the config alone.
    """
    subs = parser._subparsers._group_actions[0].choices
    required = {id(a) for sp in subs.values() for a in sp._actions if a.required}

    def parse():  # required flags are checked by hand below
        acts = [a for sp in subs.values() for a in sp._actions if id(a) in required]
        for a in acts:
            a.required = False
        try:
            return parser.parse_args(argv)
        finally:
            for a in acts:
                a.required = True

    args = parse()
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg.pop("version", None)
        if cfg.pop("command", args.command) != args.command:
            raise UsageError("config file is for a different command")
    sub = subs[args.command]
    known = {a.dest for a in sub._actions} | {"generator"}
    if args.command == "gen":
        gen_keys = {k for k in cfg if k not in known}
        if gen_keys:  # generator fields may also sit at the top level
            cfg["generator"] = {**{k: cfg.pop(k) for k in gen_keys}, **(cfg.get("generator") or {})}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**cfg)
    missing = [a for a in sub._actions
               if id(a) in required and a.dest not in cfg and getattr(args, a.dest) is None]
    if missing:
        sub.error("the following arguments are required: "
                  + ", ".join(a.option_strings[0] for a in missing))
    return parse() if cfg else args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"warmsched: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParseError, SchemaVersionMismatch, FileNotFoundError) as exc:
        print(f"warmsched: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverFailure, RoadmapDisconnected, policy.DivergenceDetected) as exc:
        print(f"warmsched: solver failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
