import json
import math

import numpy as np
import pytest

from numasched.dataset import (DatasetError, NormStats, TokenSequence,
                               TrajectoryStore, compute_norm_stats, export_tokens,
                               meta_vector, rtg_sequence, tokenize)
from numasched.index import build_index
from numasched.policies import (SN_THREAD, SchedulePolicy, baseline_schedule,
                                initial_placement)
from numasched.simkernel import (NUM_COUNTERS, HardwareSnapshot, OffcoreStats,
                                 SimConfig, Trajectory, run_simulation)
from numasched.workload import generate_workload, load_workload_spec


def _random_trajectory(tiny, rng, t=6):
    """Synthesized thread-level trajectory with integer counter rows."""
    workers = list(tiny.worker_cores)
    assignment = [int(workers[i]) for i in rng.integers(0, len(workers), size=t)]
    counters = rng.integers(0, 10_000, size=(t, NUM_COUNTERS)).astype(np.float64)
    qps = rng.integers(1, 500, size=t).astype(np.float64)
    wall = 0.25
    per_slice = qps / wall
    thpt = float(math.fsum(per_slice.tolist()))
    off = OffcoreStats(tiny.imc_channels)
    off.channel_bytes[0][0] = float(rng.integers(0, 1 << 20))
    off.link_bytes[0][1] = float(rng.integers(0, 1 << 16))
    snap = HardwareSnapshot(per_slice_counters=counters, offcore=off,
                            wall_time=wall, throughput=thpt,
                            per_slice_throughput=per_slice,
                            total_dram_loads=int(counters[:, 11].sum()
                                                 + counters[:, 12].sum()))
    policy = SchedulePolicy(SN_THREAD, "rand", int(rng.integers(0, 1 << 30)),
                            assignment=assignment)
    return Trajectory(policy=policy, snapshot=snap,
                      context={"topology": tiny.name, "workload": "synthetic",
                               "index": "bplus", "slices": t},
                      throughput=thpt)


def _sim_trajectory(tiny, small_keys, strategy="spread", t=8, seed=0):
    policy = baseline_schedule(strategy, tiny, t, seed)
    spec = load_workload_spec("rw50", seed=seed, record_count=len(small_keys),
                              query_count=4_000)
    queries = generate_workload(spec, small_keys)
    index = build_index("bplus", small_keys, t,
                        initial_placement(policy, tiny, t))
    return run_simulation(tiny, index, policy, queries, SimConfig(seed=seed))


# ------------------------------------------------------------------- rtg

def test_rtg_examples():
    assert rtg_sequence([2000.0, 3000.0, 5000.0], 10_000.0) == \
        [10_000.0, 8_000.0, 5_000.0]
    assert rtg_sequence([0.0] * 5, 7.0) == [7.0] * 5
    # init = sum of rewards telescopes to a zero residual
    rewards = [2000.0, 3000.0, 5000.0]
    seq = rtg_sequence(rewards, sum(rewards))
    assert seq[-1] - rewards[-1] == 0.0


def test_rtg_non_increasing_for_nonnegative_rewards():
    rng = np.random.default_rng(0)
    rewards = rng.random(50) * 100
    seq = rtg_sequence(rewards, 10_000.0)
    assert all(a >= b for a, b in zip(seq, seq[1:]))


# -------------------------------------------------------------- tokenize

def test_token_count_and_t0_state(tiny, small_keys):
    traj = _sim_trajectory(tiny, small_keys)
    seq = tokenize(traj, tiny)
    assert seq.token_count == 3 * 8 + 1
    assert not seq.view_masks[0].any()
    assert not seq.machine_views[0].any()
    # position mask zero exactly at non-worker tiles, at every step
    assert np.array_equal(seq.position_masks[0],
                          tiny.grid.is_worker_tile.astype(float))
    assert np.array_equal(seq.position_masks[-1], seq.position_masks[0])


def test_action_token_is_core_id_and_view_mask_sets(tiny, small_keys):
    traj = _sim_trajectory(tiny, small_keys, strategy="grouped")
    seq = tokenize(traj, tiny)
    first_core = traj.policy.assignment[0]
    assert seq.actions[0] == first_core
    r, c = tiny.grid.tile_of[first_core]
    assert seq.view_masks[1][r, c] == 1.0


def test_view_mask_recurrence(tiny):
    rng = np.random.default_rng(3)
    traj = _random_trajectory(tiny, rng, t=10)
    seq = tokenize(traj, tiny)
    for t in range(1, seq.steps):
        onehot = np.zeros_like(seq.view_masks[0])
        r, c = tiny.grid.tile_of[int(seq.actions[t - 1])]
        onehot[r, c] = 1.0
        expect = np.logical_or(seq.view_masks[t - 1], onehot).astype(float)
        assert np.array_equal(seq.view_masks[t], expect)


def test_machine_view_shared_tile_sum(tiny):
    rng = np.random.default_rng(4)
    traj = _random_trajectory(tiny, rng, t=4)
    # force two slices onto one tile
    traj.policy.assignment[1] = traj.policy.assignment[0]
    seq = tokenize(traj, tiny)
    r, c = tiny.grid.tile_of[traj.policy.assignment[0]]
    rows = traj.snapshot.per_slice_counters
    assert np.array_equal(seq.machine_views[2][r, c], rows[0] + rows[1])


def test_machine_view_conservation_and_telescoping_100_random(tiny):
    rng = np.random.default_rng(7)
    for _ in range(100):
        t = int(rng.integers(2, 12))
        traj = _random_trajectory(tiny, rng, t=t)
        seq = tokenize(traj, tiny)
        assert seq.token_count == 3 * t + 1
        # element-wise conservation at the final step (integer-valued rows)
        final = seq.machine_views[-1].sum(axis=(0, 1)) + \
            traj.snapshot.per_slice_counters[-1]
        assert np.array_equal(final,
                              traj.snapshot.per_slice_counters.sum(axis=0))
        # rtg telescoping, exact against sequential recomputation
        rtg = traj.throughput
        for s in range(t):
            assert seq.rtgs[s] == rtg
            rtg -= float(seq.rewards[s])
        # view-mask recurrence
        for s in range(1, t):
            r, c = tiny.grid.tile_of[int(seq.actions[s - 1])]
            assert seq.view_masks[s][r, c] == 1.0


def test_tokenize_rejects_os_policies(tiny, small_keys):
    traj = _sim_trajectory(tiny, small_keys)
    traj.policy = SchedulePolicy("OsDefault", "os-d", 0)
    with pytest.raises(DatasetError):
        tokenize(traj, tiny)


def test_tokenize_pure_function(tiny):
    rng = np.random.default_rng(9)
    traj = _random_trajectory(tiny, rng, t=6)
    a = tokenize(traj, tiny)
    b = tokenize(traj, tiny)
    assert np.array_equal(a.machine_views, b.machine_views)
    assert np.array_equal(a.rtgs, b.rtgs)


def test_meta_vector_fields(tiny):
    rng = np.random.default_rng(11)
    traj = _random_trajectory(tiny, rng)
    m = meta_vector(traj.snapshot, tiny)
    assert m.shape == (8,)
    assert m[0] == tiny.num_cores and m[1] == tiny.num_nodes and m[2] == tiny.sockets


# ------------------------------------------------------------------ store

def test_store_roundtrip(tiny, small_keys, tmp_path):
    store = TrajectoryStore(tmp_path / "traj.jsonl")
    traj = _sim_trajectory(tiny, small_keys)
    store.append(traj)
    loaded = store.load()
    assert len(loaded) == 1
    got = loaded[0]
    assert got.throughput == traj.throughput
    assert got.policy.assignment == traj.policy.assignment
    assert np.array_equal(got.snapshot.per_slice_counters,
                          traj.snapshot.per_slice_counters)


def test_store_filters_and_corrupt_lines(tiny, small_keys, tmp_path, caplog):
    path = tmp_path / "traj.jsonl"
    store = TrajectoryStore(path)
    a = _sim_trajectory(tiny, small_keys, seed=0)
    a.context["workload"] = "rw50"
    b = _sim_trajectory(tiny, small_keys, seed=1)
    b.context["workload"] = "scan95"
    store.append(a)
    with open(path, "a") as fh:
        fh.write("{ this is not json\n")
    store.append(b)
    import logging
    with caplog.at_level(logging.WARNING):
        got = store.load(workload="rw50")
    assert len(got) == 1 and got[0].context["workload"] == "rw50"
    assert any("corrupt" in r.message for r in caplog.records)
    assert len(store.load()) == 2


def test_store_many_appends_order_stable(tiny, tmp_path):
    rng = np.random.default_rng(2)
    store = TrajectoryStore(tmp_path / "many.jsonl")
    seeds = []
    for _ in range(50):
        traj = _random_trajectory(tiny, rng)
        seeds.append(traj.policy.seed)
        store.append(traj)
    assert store.count() == 50
    assert [t.policy.seed for t in store.load()] == seeds
    assert [t.policy.seed for t in store.load()] == seeds


# ----------------------------------------------------------------- export

def test_export_tokens_layout(tiny, small_keys, tmp_path):
    trajs = [_sim_trajectory(tiny, small_keys, strategy=s, seed=i)
             for i, s in enumerate(("grouped", "spread", "mixed"))]
    out = tmp_path / "tokens"
    paths = export_tokens(trajs, tiny, out)
    assert len(paths) == 3
    assert (out / "norm_stats.json").exists()
    assert (out / "manifest.json").exists()
    data = np.load(paths[0])
    t, h, mi, mj, cores = data["dims"]
    assert (t, h) == (8, NUM_COUNTERS)
    assert (mi, mj) == tiny.grid.dims
    assert data["counters"].shape == (8, NUM_COUNTERS)
    assert data["counters"].dtype == np.dtype("<f4")
    assert data["actions"].dtype == np.dtype("<i4")
    assert data["rtg"].shape == (8,)
    assert data["position_mask"].shape == tiny.grid.dims
    assert data["core_is_worker"].sum() == len(tiny.worker_cores)
    stats = NormStats.load(out / "norm_stats.json")
    assert stats.counter_mean.shape == (NUM_COUNTERS,)
    # normalized rows reproduce raw rows through the sidecar
    raw = trajs[0].snapshot.per_slice_counters
    renorm = data["counters"] * stats.counter_std + stats.counter_mean
    assert np.allclose(renorm, raw, rtol=1e-5, atol=1e-2)


def test_norm_stats_zero_variance_guard(tiny):
    rng = np.random.default_rng(13)
    trajs = [_random_trajectory(tiny, rng) for _ in range(3)]
    for t in trajs:
        t.snapshot.per_slice_counters[:, 5] = 42.0     # constant feature
    stats = compute_norm_stats(trajs)
    assert stats.counter_std[5] == 1.0
    normalized = stats.apply(trajs[0].snapshot.per_slice_counters)
    assert np.all(np.isfinite(normalized))
