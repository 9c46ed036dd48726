import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from numasched.cli import main
from numasched.dataset import TrajectoryStore


def run_cli(args, **kw):
    return main([str(a) for a in args])


def test_simulate_appends_record(tmp_path):
    out = tmp_path / "traj.jsonl"
    rc = run_cli(["simulate", "--topology", "tiny-2n4c", "--workload", "rw50",
                  "--policy", "grouped", "--slices", 8, "--records", 5000,
                  "--queries", 3000, "--out", out])
    assert rc == 0
    store = TrajectoryStore(out)
    trajs = store.load()
    assert len(trajs) == 1
    assert trajs[0].policy.strategy == "grouped"
    assert trajs[0].context["workload"] == "rw50"


def test_simulate_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        run_cli(["simulate", "--topology", "tiny-2n4c", "--workload", "rw50",
                 "--policy", "spread", "--slices", 8, "--records", 5000,
                 "--queries", 3000, "--out", out])
    assert a.read_bytes() == b.read_bytes()


def test_collect_product_and_idempotence(tmp_path):
    out = tmp_path / "store.jsonl"
    base = ["collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
            "--policies", "os-d,grouped,spread", "--seeds", "0,1",
            "--slices", 8, "--records", 4000, "--queries", 2000,
            "--out", out, "--quiet"]
    assert run_cli(base) == 0
    store = TrajectoryStore(out)
    assert store.count() == 6        # 1 topo x 1 workload x 3 policies x 2 seeds
    assert run_cli(base) == 0        # re-invocation adds nothing
    assert store.count() == 6


def test_collect_random_sweep_distinct(tmp_path):
    out = tmp_path / "store.jsonl"
    rc = run_cli(["collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
                  "--policies", "random-sweep", "--random-per-seed", 20,
                  "--seeds", "0", "--slices", 8, "--records", 3000,
                  "--queries", 1000, "--out", out, "--quiet"])
    assert rc == 0
    trajs = TrajectoryStore(out).load()
    assert len(trajs) == 20
    hashes = {tuple(t.policy.assignment) for t in trajs}
    assert len(hashes) == 20


def test_dataset_tokenize_cli(tmp_path):
    out = tmp_path / "store.jsonl"
    run_cli(["collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
             "--policies", "grouped,spread,os-d", "--seeds", "0",
             "--slices", 8, "--records", 4000, "--queries", 2000,
             "--out", out, "--quiet"])
    tokens = tmp_path / "tokens"
    rc = run_cli(["dataset", "tokenize", "--in", out, "--topology", "tiny-2n4c",
                  "--out", tokens])
    assert rc == 0
    files = sorted(tokens.glob("*.npz"))
    assert len(files) == 2           # os-d is not tokenizable
    manifest = json.loads((tokens / "manifest.json").read_text())
    assert manifest["topology"] == "tiny-2n4c"
    assert (tokens / "norm_stats.json").exists()


def test_evaluate_and_report(tmp_path):
    store = tmp_path / "store.jsonl"
    run_cli(["collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
             "--policies", "os-d,grouped,spread", "--seeds", "0",
             "--slices", 8, "--records", 4000, "--queries", 2000,
             "--out", store, "--quiet"])
    outdir = tmp_path / "reports"
    rc = run_cli(["evaluate", "--store", store, "--topology", "tiny-2n4c",
                  "--workload", "rw50", "--out", outdir])
    assert rc == 0
    csvs = list(outdir.glob("*.csv"))
    pngs = list(outdir.glob("*.png"))
    assert len(csvs) == 1 and len(pngs) == 1
    header = csvs[0].read_text().splitlines()[0]
    assert header.startswith("policy,seed,throughput,normalized")

    # byte-identical regeneration
    before = csvs[0].read_bytes()
    rc = run_cli(["report", "--store", store, "--out", tmp_path / "r2"])
    assert rc == 0
    rc = run_cli(["evaluate", "--store", store, "--topology", "tiny-2n4c",
                  "--workload", "rw50", "--out", outdir])
    assert csvs[0].read_bytes() == before


def test_evaluate_learned_policy_flag(tmp_path):
    store = tmp_path / "store.jsonl"
    run_cli(["collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
             "--policies", "os-d,os-i", "--seeds", "0",
             "--slices", 8, "--records", 4000, "--queries", 2000,
             "--out", store, "--quiet"])
    # "learned" policy: a grouped schedule saved to a file
    from numasched.policies import baseline_schedule
    from numasched.topology import build_topology
    tiny = build_topology(preset="tiny-2n4c")
    policy = baseline_schedule("grouped", tiny, 8, 0)
    pfile = tmp_path / "learned.json"
    policy.save(pfile)
    rc = run_cli(["evaluate", "--store", store, "--topology", "tiny-2n4c",
                  "--workload", "rw50", "--policy-file", pfile,
                  "--learned-name", "learned", "--assert",
                  "--out", tmp_path / "rep"])
    assert rc == 0                   # grouped beats the OS baselines

    rows = (tmp_path / "rep" / "evaluate-tiny-2n4c-rw50.csv").read_text()
    assert "learned" in rows


def test_missing_baseline_context_errors(tmp_path):
    store = tmp_path / "empty.jsonl"
    store.write_text("")
    rc = run_cli(["evaluate", "--store", store, "--topology", "tiny-2n4c",
                  "--workload", "rw50", "--out", tmp_path / "rep"])
    assert rc == 2


def test_entrypoint_subprocess(tmp_path):
    # the installed console script works end to end
    out = tmp_path / "traj.jsonl"
    proc = subprocess.run(
        [sys.executable, "-m", "numasched.cli", "simulate", "--topology",
         "tiny-2n4c", "--workload", "lookup100", "--policy", "sn-n",
         "--slices", "4", "--records", "2000", "--queries", "1000",
         "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
