"""Command-line entry point.

Subcommands: simulate one run, collect a plan of runs into a trajectory
store, tokenize a store for the learning agent, evaluate a policy (or a
learned policy file) against stored baselines, and render reports.
The default output root comes from NUMASCHED_OUT (falling back to ./out).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import TrajectoryStore, cell_key, export_tokens
from .index import build_index
from .policies import (BASELINE_STRATEGIES, SchedulePolicy, initial_placement,
                       resolve_policy_arg, validate_policy)
from .simkernel import SimConfig, Trajectory, run_simulation
from .topology import PRESET_NAMES, build_topology
from .workload import (generate_spatial_workload, generate_workload,
                       load_records_csv, load_workload_spec, make_points,
                       make_records)

DEFAULT_RECORD_SEED = 1234


def out_root() -> Path:
    return Path(os.environ.get("NUMASCHED_OUT", "out"))


def _topology_from_arg(arg: str):
    if arg in PRESET_NAMES:
        return build_topology(preset=arg)
    return build_topology(spec=arg)


def _records_for(args, kind: str, seed: int):
    if getattr(args, "records_file", None):
        return load_records_csv(args.records_file)
    if kind == "rtree2d":
        return make_points(args.records, seed)
    return make_records(args.records, seed)


def _run_cell(topo, kind: str, slices: int, records, workload_name: str,
              record_seed: int, seed: int, queries_n: int, policy) -> Trajectory:
    spec = load_workload_spec(workload_name, seed=seed,
                              record_count=len(records), query_count=queries_n)
    if kind == "rtree2d":
        queries = generate_spatial_workload(spec, records)
    else:
        queries = generate_workload(spec, records)
    index = build_index(kind, records, slices, initial_placement(policy, topo, slices))
    cfg = SimConfig(seed=seed)
    context = {
        "topology": topo.name, "workload": spec.name, "index": kind,
        "slices": slices, "records": len(records), "queries": len(queries),
        "record_seed": record_seed, "seed": seed,
    }
    return run_simulation(topo, index, policy, queries, cfg, context)


def cmd_simulate(args) -> int:
    topo = _topology_from_arg(args.topology)
    records = _records_for(args, args.index, args.record_seed)
    policy = resolve_policy_arg(args.policy, topo, args.slices, args.seed)
    traj = _run_cell(topo, args.index, args.slices, records, args.workload,
                     args.record_seed, args.seed, args.queries, policy)
    store = TrajectoryStore(args.out)
    store.append(traj)
    print(f"{policy.name}: {traj.throughput:.1f} q/s "
          f"(wall {traj.snapshot.wall_time * 1e3:.2f} ms sim) -> {args.out}")
    return 0


def cmd_collect(args) -> int:
    store = TrajectoryStore(args.out)
    done = store.cell_keys()
    policies = args.policies.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    ran = skipped = failed = 0
    for topo_name in args.topologies.split(","):
        topo = _topology_from_arg(topo_name)
        for workload_name in args.workloads.split(","):
            records = _records_for(args, args.index, args.record_seed)
            for policy_name in policies:
                for seed in seeds:
                    try:
                        if policy_name == "random-sweep":
                            names = [("random", seed * 1000 + i)
                                     for i in range(args.random_per_seed)]
                        else:
                            names = [(policy_name, seed)]
                        for name, pseed in names:
                            policy = resolve_policy_arg(name, topo, args.slices, pseed)
                            context = {
                                "topology": topo.name, "workload": workload_name,
                                "index": args.index, "slices": args.slices,
                                "records": len(records), "queries": args.queries,
                                "record_seed": args.record_seed, "seed": seed,
                            }
                            key = cell_key(context, policy.to_json())
                            if key in done:
                                skipped += 1
                                continue
                            traj = _run_cell(topo, args.index, args.slices, records,
                                             workload_name, args.record_seed, seed,
                                             args.queries, policy)
                            store.append(traj)
                            done.add(key)
                            ran += 1
                            if not args.quiet:
                                print(f"  {topo.name}/{workload_name}/{policy.name}"
                                      f"/seed{seed}: {traj.throughput:.1f} q/s")
                    except Exception as exc:   # per-cell failures do not stop the run
                        failed += 1
                        print(f"  FAILED {topo_name}/{workload_name}/{policy_name}"
                              f"/seed{seed}: {exc}", file=sys.stderr)
    print(f"collect: {ran} new, {skipped} skipped, {failed} failed -> {args.out}")
    return 1 if failed else 0


def cmd_dataset_tokenize(args) -> int:
    topo = _topology_from_arg(args.topology)
    store = TrajectoryStore(args.inp)
    filters = {"topology": topo.name}
    if args.workload:
        filters["workload"] = args.workload
    trajs = [t for t in store.load(**filters) if t.policy.kind == "SnThread"]
    if not trajs:
        print("no thread-level trajectories matched", file=sys.stderr)
        return 2
    paths = export_tokens(trajs, topo, args.out)
    print(f"tokenized {len(paths)} trajectories -> {args.out}")
    return 0


def _context_filters(args) -> dict:
    filters = {"topology": args.topology, "workload": args.workload}
    if args.index:
        filters["index"] = args.index
    return filters


def cmd_evaluate(args) -> int:
    from .report import comparison_rows, write_report

    store = TrajectoryStore(args.store)
    trajs = store.load(**_context_filters(args))
    if not trajs:
        print("no baseline trajectories for this context", file=sys.stderr)
        return 2
    learned: set[str] = set()
    if args.policy_file:
        topo = _topology_from_arg(args.topology)
        slices = trajs[0].context["slices"]
        policy = resolve_policy_arg(f"file:{args.policy_file}", topo, slices)
        base = trajs[0].context
        records = make_records(base["records"], base["record_seed"]) \
            if base["index"] == "bplus" else make_points(base["records"],
                                                         base["record_seed"])
        traj = _run_cell(topo, base["index"], slices, records, base["workload"],
                         base["record_seed"], base["seed"], base["queries"], policy)
        learned_name = args.learned_name or f"learned:{Path(args.policy_file).stem}"
        traj.policy.strategy = learned_name
        learned.add(learned_name)
        trajs.append(traj)
    rows = comparison_rows(trajs, learned)
    out = Path(args.out or out_root() / "reports")
    csv_path, fig_path = write_report(
        rows, out, f"evaluate-{args.topology}-{args.workload}",
        title=f"{args.topology} / {args.workload}")
    print(f"report: {csv_path} and {fig_path}")
    for r in rows:
        mark = " <- learned" if r["is_learned"] else ""
        print(f"  {r['policy']:<16} {r['throughput']:14.1f} q/s "
              f"{r['normalized']:6.3f}x{mark}")
    if learned:
        won = any(r["wins"] for r in rows)
        print("learned wins" if won else "learned does not beat the best baseline")
        if args.assert_wins and not won:
            return 1
    return 0


def cmd_report(args) -> int:
    from .report import comparison_rows, context_of, write_report

    store = TrajectoryStore(args.store)
    trajs = store.load()
    if not trajs:
        print("empty store", file=sys.stderr)
        return 2
    by_ctx: dict[tuple, list] = {}
    for t in trajs:
        by_ctx.setdefault(context_of(t), []).append(t)
    out = Path(args.out or out_root() / "reports")
    for ctx, group in sorted(by_ctx.items(), key=lambda kv: str(kv[0])):
        name = f"report-{ctx[0]}-{ctx[1]}-{ctx[2]}"
        rows = comparison_rows(group)
        csv_path, fig_path = write_report(rows, out, name,
                                          title=f"{ctx[0]} / {ctx[1]} / {ctx[2]}")
        print(f"{name}: {len(group)} trajectories -> {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="numasched",
                                description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_run_args(sp, with_policy=True):
        sp.add_argument("--topology", required=True,
                        help=f"preset ({', '.join(PRESET_NAMES)}) or spec JSON path")
        sp.add_argument("--index", default="bplus", choices=("bplus", "rtree2d"))
        sp.add_argument("--slices", type=int, default=256)
        sp.add_argument("--records", type=int, default=100_000)
        sp.add_argument("--queries", type=int, default=100_000)
        sp.add_argument("--records-file", help="CSV of key,value records")
        sp.add_argument("--record-seed", type=int, default=DEFAULT_RECORD_SEED)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("simulate", help="run one policy once")
    add_run_args(sp)
    sp.add_argument("--workload", required=True, help="canned name or spec JSON path")
    sp.add_argument("--policy", required=True,
                    help=f"{'|'.join(BASELINE_STRATEGIES)}|file:<path>")
    sp.add_argument("--out", default=str(out_root() / "trajectories.jsonl"))
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("collect", help="run a plan of cells into a store")
    add_run_args(sp)
    sp.add_argument("--topologies", required=True, help="comma-separated presets")
    sp.add_argument("--workloads", required=True, help="comma-separated names")
    sp.add_argument("--policies", default=",".join(BASELINE_STRATEGIES),
                    help="baseline names, file:<path> entries, or random-sweep")
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--random-per-seed", type=int, default=1,
                    help="policies=random-sweep: distinct random policies per seed")
    sp.add_argument("--quiet", action="store_true")
    sp.add_argument("--out", default=str(out_root() / "trajectories.jsonl"))
    sp.set_defaults(fn=cmd_collect)
    # --topology is unused by collect but kept uniform; hide the requirement
    for a in sp._actions:
        if a.dest == "topology":
            a.required = False
            a.default = "tiny-2n4c"

    spd = sub.add_parser("dataset", help="dataset utilities")
    dsub = spd.add_subparsers(dest="dataset_command", required=True)
    sp = dsub.add_parser("tokenize", help="export token containers for the agent")
    sp.add_argument("--in", dest="inp", required=True, help="trajectory store")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--workload", default="")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_dataset_tokenize)

    sp = sub.add_parser("evaluate", help="compare a policy against stored baselines")
    sp.add_argument("--store", required=True)
    sp.add_argument("--topology", required=True)
    sp.add_argument("--workload", required=True)
    sp.add_argument("--index", default="")
    sp.add_argument("--policy-file", default="")
    sp.add_argument("--learned-name", default="")
    sp.add_argument("--assert", dest="assert_wins", action="store_true",
                    help="exit nonzero unless the learned policy wins")
    sp.add_argument("--out", default="")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("report", help="render per-context reports from a store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--out", default="")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
