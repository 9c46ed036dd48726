import itertools
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from schedagent.containers import load_container, load_token_dir


def run_lab(*args):
    """Invoke the simulator lab's CLI (the only interface we consume)."""
    proc = subprocess.run([sys.executable, "-m", "numasched.cli",
                           *[str(a) for a in args]],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"numasched {args[0]} failed:\n{proc.stderr}")
    return proc.stdout


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("agent-data")


@pytest.fixture(scope="session")
def small_tokens(workdir):
    """16 mixed-policy trajectories on the tiny topology, 8 slices."""
    store = workdir / "small-store.jsonl"
    tokens = workdir / "small-tokens"
    run_lab("collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
            "--policies", "grouped,spread,mixed,random", "--seeds", "0,1,2,3",
            "--slices", 8, "--records", 4000, "--queries", 2000,
            "--out", store, "--quiet")
    run_lab("dataset", "tokenize", "--in", store, "--topology", "tiny-2n4c",
            "--out", tokens)
    return {"tokens": tokens, "store": store}


@pytest.fixture(scope="session")
def enum_dataset(workdir):
    """All 256 four-slice thread assignments plus the eight baselines on
    tiny-2n4c, simulated and tokenized: the offline dataset for the
    acceptance checks."""
    store = workdir / "enum-store.jsonl"
    tokens = workdir / "enum-tokens"
    pol_dir = workdir / "enum-policies"
    pol_dir.mkdir(exist_ok=True)

    run_lab("collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
            "--policies", "grouped,spread,mixed,random,os-d,os-i,se-n,sn-n",
            "--seeds", "0", "--slices", 4, "--records", 5000,
            "--queries", 3000, "--out", store, "--quiet")
    probe = workdir / "probe-tokens"
    run_lab("dataset", "tokenize", "--in", store, "--topology", "tiny-2n4c",
            "--out", probe)
    first = load_container(sorted(probe.glob("*.npz"))[0])
    workers = [i for i, w in enumerate(first.core_is_worker) if w]

    entries = []
    for i, combo in enumerate(itertools.product(workers, repeat=4)):
        p = pol_dir / f"enum{i:03d}.json"
        p.write_text(json.dumps({"kind": "SnThread", "strategy": f"enum{i:03d}",
                                 "seed": 0, "assignment": list(combo)}))
        entries.append(f"file:{p}")
    run_lab("collect", "--topologies", "tiny-2n4c", "--workloads", "rw50",
            "--policies", ",".join(entries), "--seeds", "0", "--slices", 4,
            "--records", 5000, "--queries", 3000, "--out", store, "--quiet")
    run_lab("dataset", "tokenize", "--in", store, "--topology", "tiny-2n4c",
            "--out", tokens)

    records = [json.loads(line) for line in store.read_text().splitlines()]
    enum_best = max(r["throughput"] for r in records
                    if r["policy"]["strategy"].startswith("enum"))
    baseline_best = max(r["throughput"] for r in records
                        if not r["policy"]["strategy"].startswith("enum"))
    return {"store": store, "tokens": tokens, "workers": workers,
            "enum_best": enum_best, "baseline_best": baseline_best}


@pytest.fixture(scope="session")
def trained_ckpt(workdir, enum_dataset):
    """A checkpoint trained to high accuracy on the enumerated dataset."""
    from schedagent.train import TrainConfig, train

    out = workdir / "ckpt-enum"
    metrics = train(enum_dataset["tokens"], out,
                    TrainConfig(epochs=1200, batch_size=64, lr=1e-3, seed=0,
                                target_accuracy=0.97, log_every=100))
    return {"dir": out, "metrics": metrics}
