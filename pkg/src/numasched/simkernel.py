"""Query-execution simulator.

Routes a query stream onto worker cores under a scheduling policy,
executes each query against the sliced index, synthesizes per-core
performance counters through a small LRU cache/TLB model, accounts
off-core memory-channel and interconnect traffic, harvests counter
deltas in sweeping rounds, and stitches the rounds into one hardware
snapshot per run.

Time is simulated nanoseconds; workers are closed-loop (always busy
while queries remain in their queues), so run throughput is the query
count divided by the busiest worker's clock.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .index.base import SlicedIndexBase
from .policies import (OS_DEFAULT, OS_INTERLEAVE, SE_NUMA, SN_NUMA, SN_THREAD,
                       SchedulePolicy, validate_policy)
from .topology import NumaTopology
from .workload import Query, SCAN

log = logging.getLogger(__name__)

COUNTER_NAMES = (
    "clock_cycles", "instructions", "l1d_misses", "l1i_misses", "llc_misses",
    "branch_misses", "memory_misses", "dtlb_misses", "llc_write_misses",
    "memory_write_misses", "memory_accesses", "local_dram_loads",
    "remote_dram_loads", "l3_miss_stall_cycles", "memory_stall_cycles",
    "executed_query_batches",
)
NUM_COUNTERS = len(COUNTER_NAMES)

(C_CYCLES, C_INST, C_L1D, C_L1I, C_LLC, C_BRANCH, C_MEM_MISS, C_DTLB,
 C_LLC_W, C_MEM_W, C_MEM_ACC, C_LOCAL, C_REMOTE, C_L3_STALL, C_MEM_STALL,
 C_BATCHES) = range(NUM_COUNTERS)


class SimError(ValueError):
    pass


@dataclass
class SimConfig:
    profiling_granularity: int = 100     # queries per core-trace record
    sweep_interval: int = 10_000         # routed queries between sweeping rounds
    l1_lines: int = 8                    # per-core L1, in index-node units
    llc_lines: int = 64                  # per-node LLC, in index-node units
    tlb_entries: int = 16                # per-core DTLB
    pages_per_group: int = 8             # index nodes per memory page
    inst_per_node_visit: int = 20
    inst_per_comparison: int = 4
    ns_per_instruction: float = 0.1
    frequency_ghz: float = 2.0
    tlb_miss_penalty_ns: float = 20.0
    comparisons_per_branch_miss: int = 16
    visits_per_l1i_miss: int = 100
    contention_coeff: float = 1.0        # extra latency fraction at 100% utilization
    seed: int = 0

    def validate(self) -> None:
        if self.profiling_granularity < 1:
            raise SimError("profiling granularity must be >= 1")
        if self.sweep_interval < 1:
            raise SimError("sweep interval must be >= 1")


class OffcoreStats:
    """Per-node per-channel bytes and per-node-pair interconnect bytes."""

    def __init__(self, channels: tuple[int, ...]):
        self.channel_bytes = [[0.0] * c for c in channels]
        self.link_bytes = np.zeros((len(channels), len(channels)))

    def add(self, other: "OffcoreStats") -> None:
        for n, chans in enumerate(other.channel_bytes):
            for c, v in enumerate(chans):
                self.channel_bytes[n][c] += v
        self.link_bytes += other.link_bytes

    def total_channel_bytes(self) -> float:
        return float(sum(sum(c) for c in self.channel_bytes))

    def total_interconnect_bytes(self) -> float:
        return float(self.link_bytes.sum())

    def to_json(self) -> dict:
        return {"channel_bytes": [[float(v) for v in c] for c in self.channel_bytes],
                "link_bytes": [[float(v) for v in row] for row in self.link_bytes]}

    @classmethod
    def from_json(cls, raw: dict) -> "OffcoreStats":
        out = cls(tuple(len(c) for c in raw["channel_bytes"]))
        out.channel_bytes = [[float(v) for v in c] for c in raw["channel_bytes"]]
        out.link_bytes = np.array(raw["link_bytes"], dtype=np.float64)
        return out


@dataclass
class HardwareSnapshot:
    per_slice_counters: np.ndarray          # [T, NUM_COUNTERS]
    offcore: OffcoreStats
    wall_time: float                        # simulated seconds
    throughput: float                       # queries per simulated second
    per_slice_throughput: np.ndarray        # [T]
    total_dram_loads: int = 0

    @property
    def slice_count(self) -> int:
        return self.per_slice_counters.shape[0]

    def counter_total(self, idx: int) -> float:
        return float(self.per_slice_counters[:, idx].sum())

    def to_json(self) -> dict:
        return {
            "per_slice_counters": [[float(v) for v in row]
                                   for row in self.per_slice_counters],
            "offcore": self.offcore.to_json(),
            "wall_time": self.wall_time,
            "throughput": self.throughput,
            "per_slice_throughput": [float(v) for v in self.per_slice_throughput],
            "total_dram_loads": int(self.total_dram_loads),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "HardwareSnapshot":
        return cls(
            per_slice_counters=np.array(raw["per_slice_counters"], dtype=np.float64),
            offcore=OffcoreStats.from_json(raw["offcore"]),
            wall_time=float(raw["wall_time"]),
            throughput=float(raw["throughput"]),
            per_slice_throughput=np.array(raw["per_slice_throughput"], dtype=np.float64),
            total_dram_loads=int(raw.get("total_dram_loads", 0)),
        )


@dataclass
class Trajectory:
    policy: SchedulePolicy
    snapshot: HardwareSnapshot
    context: dict
    throughput: float

    def to_record(self) -> dict:
        return {"context": self.context, "policy": self.policy.to_json(),
                "snapshot": self.snapshot.to_json(), "throughput": self.throughput}

    @classmethod
    def from_record(cls, raw: dict) -> "Trajectory":
        return cls(policy=SchedulePolicy.from_json(raw["policy"]),
                   snapshot=HardwareSnapshot.from_json(raw["snapshot"]),
                   context=raw["context"], throughput=float(raw["throughput"]))


# ------------------------------------------------------------------ routing

class _RandStream:
    """Buffered uniform draws so per-query routing stays cheap."""

    def __init__(self, rng: np.random.Generator, size: int = 1 << 14):
        self._rng = rng
        self._size = size
        self._buf = rng.random(size)
        self._i = 0

    def pick(self, k: int) -> int:
        if k <= 1:
            return 0
        if self._i == self._size:
            self._buf = self._rng.random(self._size)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return min(k - 1, int(u * k))


class Router:
    """Maps (query, overlapped slices) to the executing worker core.

    Also reports the routed slice, the attribution target for the
    profiled batch the query lands in.
    """

    def __init__(self, topo: NumaTopology, policy: SchedulePolicy,
                 slice_count: int, rng: np.random.Generator):
        violations = validate_policy(policy, topo, slice_count)
        if violations:
            raise SimError("policy failed validation: " + "; ".join(violations[:5]))
        self.topo = topo
        self.policy = policy
        self.rand = _RandStream(rng)
        self.workers = list(topo.worker_cores)
        self.kind = policy.kind
        if self.kind == SN_THREAD:
            self.assign = list(policy.assignment)
        elif self.kind == SN_NUMA:
            self.place = list(policy.placement)
            self.node_workers = [topo.workers_on_node(n) for n in range(topo.num_nodes)]

    def route(self, slice_ids: list[int]) -> tuple[int, int]:
        """Return (routed_slice, core)."""
        if self.kind == SN_THREAD:
            if len(slice_ids) == 1:
                s = slice_ids[0]
                return s, self.assign[s]
            cores = []
            for s in slice_ids:
                c = self.assign[s]
                if c not in cores:
                    cores.append(c)
            core = cores[self.rand.pick(len(cores))]
            for s in slice_ids:
                if self.assign[s] == core:
                    return s, core
        s = slice_ids[self.rand.pick(len(slice_ids))] if len(slice_ids) > 1 else slice_ids[0]
        if self.kind == SN_NUMA:
            ws = self.node_workers[self.place[s]]
            return s, ws[self.rand.pick(len(ws))]
        # SE:N and the OS emulations route to any worker machine-wide
        return s, self.workers[self.rand.pick(len(self.workers))]


# ------------------------------------------------------------- counter model

class CacheState:
    """Per-run LRU state: per-core L1 and DTLB, per-node LLC."""

    def __init__(self, topo: NumaTopology):
        self.l1 = {c: OrderedDict() for c in topo.worker_cores}
        self.tlb = {c: OrderedDict() for c in topo.worker_cores}
        self.llc = [OrderedDict() for _ in range(topo.num_nodes)]


def synthesize_counters(topo: NumaTopology, cfg: SimConfig, caches: CacheState,
                        core: int, trace, row: np.ndarray, offcore: OffcoreStats,
                        pen_chan: list[list[float]], pen_link: np.ndarray,
                        dram_loads: list[int]) -> tuple[float, int]:
    """Charge one executed query against the cache model.

    Mutates the worker's current batch counter row and the off-core
    accumulators; returns (time_ns, node_visits).
    """
    my_node = topo.node_of(core)
    l1 = caches.l1[core]
    tlb = caches.tlb[core]
    llcs = caches.llc
    dram = topo.dram_latency
    l1_ns = topo.l1_latency
    llc_ns = topo.llc_latency
    freq = cfg.frequency_ghz
    t = 0.0
    visits = 0
    for nid, home, is_write, nbytes in trace.accesses:
        visits += 1
        page = nid // cfg.pages_per_group
        if page in tlb:
            tlb.move_to_end(page)
        else:
            row[C_DTLB] += 1.0
            t += cfg.tlb_miss_penalty_ns
            tlb[page] = True
            if len(tlb) > cfg.tlb_entries:
                tlb.popitem(last=False)
        if nid in l1:
            l1.move_to_end(nid)
            t += l1_ns
            continue
        row[C_L1D] += 1.0
        llc = llcs[my_node]
        if nid in llc:
            llc.move_to_end(nid)
            t += llc_ns
            row[C_MEM_STALL] += llc_ns * freq
        else:
            pen = pen_chan[home][nid % len(pen_chan[home])]
            if home != my_node:
                pen += pen_link[my_node][home]
            lat = dram[core, home] * (1.0 + pen)
            t += lat
            row[C_MEM_ACC] += 1.0
            if is_write:
                row[C_LLC_W] += 1.0
                row[C_MEM_W] += 1.0
            else:
                row[C_LLC] += 1.0
                row[C_MEM_MISS] += 1.0
                if home == my_node:
                    row[C_LOCAL] += 1.0
                    dram_loads[0] += 1
                else:
                    row[C_REMOTE] += 1.0
                    dram_loads[1] += 1
            row[C_L3_STALL] += lat * freq
            row[C_MEM_STALL] += lat * freq
            offcore.channel_bytes[home][nid % len(offcore.channel_bytes[home])] += nbytes
            if home != my_node:
                if is_write:
                    offcore.link_bytes[my_node][home] += nbytes
                else:
                    offcore.link_bytes[home][my_node] += nbytes
            llc[nid] = True
            if len(llc) > cfg.llc_lines:
                llc.popitem(last=False)
        l1[nid] = True
        if len(l1) > cfg.l1_lines:
            l1.popitem(last=False)
    inst = visits * cfg.inst_per_node_visit + trace.comparisons * cfg.inst_per_comparison
    row[C_INST] += inst
    row[C_BRANCH] += trace.comparisons // cfg.comparisons_per_branch_miss
    t += inst * cfg.ns_per_instruction
    row[C_CYCLES] += t * freq
    return t, visits


class _Worker:
    __slots__ = ("core", "clock", "row", "batch_n", "batch_slice", "vis_ctr")

    def __init__(self, core: int):
        self.core = core
        self.clock = 0.0
        self.row = np.zeros(NUM_COUNTERS)
        self.batch_n = 0
        self.batch_slice = 0
        self.vis_ctr = 0


def stitch(core_rounds: list[np.ndarray], offcore_rounds: list[OffcoreStats],
           queries_per_slice: np.ndarray, wall_time_s: float,
           channels: tuple[int, ...]) -> HardwareSnapshot:
    """Sum per-round core and off-core snapshots into one hardware snapshot.

    Mismatched round counts are tolerated by stitching up to the shorter
    stream (with a warning).
    """
    if not core_rounds or not offcore_rounds:
        raise SimError("need at least one completed sweeping round")
    n = min(len(core_rounds), len(offcore_rounds))
    if len(core_rounds) != len(offcore_rounds):
        log.warning("round count mismatch: %d core vs %d off-core; stitching %d",
                    len(core_rounds), len(offcore_rounds), n)
    total = np.zeros_like(core_rounds[0])
    for r in core_rounds[:n]:
        total += r
    off = OffcoreStats(channels)
    for o in offcore_rounds[:n]:
        off.add(o)
    per_slice_thpt = queries_per_slice / wall_time_s if wall_time_s > 0 else \
        np.zeros_like(queries_per_slice, dtype=np.float64)
    throughput = float(math.fsum(per_slice_thpt.tolist()))
    return HardwareSnapshot(
        per_slice_counters=total, offcore=off, wall_time=wall_time_s,
        throughput=throughput, per_slice_throughput=per_slice_thpt.astype(np.float64),
    )


def run_simulation(topo: NumaTopology, index: SlicedIndexBase,
                   policy: SchedulePolicy, queries: list[Query],
                   config: SimConfig | None = None,
                   context: dict | None = None,
                   batch_log: list | None = None) -> Trajectory:
    """Execute the full stream and return the (policy, snapshot) trajectory.

    If `batch_log` is a list, every closed profiling batch is appended to
    it as (slice_id, counter_row_copy, query_count) — the unsegmented
    counter log that stitching must reproduce.
    """
    cfg = config or SimConfig()
    cfg.validate()
    if not queries:
        raise SimError("empty workload")
    t_slices = index.slice_count
    rng = np.random.default_rng(cfg.seed)
    router = Router(topo, policy, t_slices, rng)
    caches = CacheState(topo)

    workers = {c: _Worker(c) for c in topo.worker_cores}
    worker_list = list(workers.values())
    queries_per_slice = np.zeros(t_slices, dtype=np.int64)
    round_mat = np.zeros((t_slices, NUM_COUNTERS))
    off_round = OffcoreStats(topo.imc_channels)
    core_rounds: list[np.ndarray] = []
    off_rounds: list[OffcoreStats] = []
    pen_chan = [[0.0] * c for c in topo.imc_channels]
    pen_link = np.zeros((topo.num_nodes, topo.num_nodes))
    dram_loads = [0, 0]
    prev_max_clock = 0.0
    granularity = cfg.profiling_granularity
    vis_per_l1i = cfg.visits_per_l1i_miss

    def close_batch(w: _Worker) -> None:
        w.row[C_BATCHES] += 1.0
        round_mat[w.batch_slice] += w.row
        queries_per_slice[w.batch_slice] += w.batch_n
        if batch_log is not None:
            batch_log.append((w.batch_slice, w.row.copy(), w.batch_n))
        w.row[:] = 0.0
        w.batch_n = 0

    def close_round() -> None:
        nonlocal round_mat, off_round, prev_max_clock
        for w in worker_list:
            if w.batch_n:
                close_batch(w)
        core_rounds.append(round_mat)
        off_rounds.append(off_round)
        max_clock = max(w.clock for w in worker_list)
        secs = max(1e-12, (max_clock - prev_max_clock) * 1e-9)
        prev_max_clock = max_clock
        coeff = cfg.contention_coeff
        for n in range(topo.num_nodes):
            for c in range(topo.imc_channels[n]):
                u = off_round.channel_bytes[n][c] / (topo.channel_bandwidth * secs)
                pen_chan[n][c] = coeff * max(0.0, 2.0 * u - 1.0)
        link_u = off_round.link_bytes / (topo.interconnect_capacity * secs)
        np.multiply(np.maximum(0.0, 2.0 * link_u - 1.0), coeff, out=pen_link)
        round_mat = np.zeros((t_slices, NUM_COUNTERS))
        off_round = OffcoreStats(topo.imc_channels)

    since_round = 0
    for q in queries:
        slice_ids = index.slices_of(q)
        s, core = router.route(slice_ids)
        w = workers[core]
        if w.batch_n == 0:
            w.batch_slice = s
        trace = index.execute(q)
        dt, visits = synthesize_counters(topo, cfg, caches, core, trace, w.row,
                                         off_round, pen_chan, pen_link, dram_loads)
        w.clock += dt
        w.vis_ctr += visits
        while w.vis_ctr >= vis_per_l1i:
            w.row[C_L1I] += 1.0
            w.vis_ctr -= vis_per_l1i
        w.batch_n += 1
        if w.batch_n == granularity:
            close_batch(w)
        since_round += 1
        if since_round == cfg.sweep_interval:
            close_round()
            since_round = 0
    if since_round or not core_rounds:
        close_round()

    wall = max(w.clock for w in worker_list) * 1e-9
    snapshot = stitch(core_rounds, off_rounds, queries_per_slice, wall,
                      topo.imc_channels)
    snapshot.total_dram_loads = dram_loads[0] + dram_loads[1]
    ctx = dict(context or {})
    ctx.setdefault("topology", topo.name)
    ctx.setdefault("index", index.kind)
    ctx.setdefault("slices", t_slices)
    ctx.setdefault("queries", len(queries))
    return Trajectory(policy=policy, snapshot=snapshot, context=ctx,
                      throughput=snapshot.throughput)


# ---------------------------------------------------------------- enforcement

@dataclass
class EnforceReport:
    changed_slices: list[int]
    rounds: list[list[tuple[int, int]]] = field(default_factory=list)
    traces: int = 0


def _target_homes(index: SlicedIndexBase, policy: SchedulePolicy,
                  topo: NumaTopology) -> list[int]:
    if policy.kind == SN_THREAD:
        return [topo.node_of(policy.assignment[s]) for s in range(index.slice_count)]
    if policy.kind in (SE_NUMA, SN_NUMA):
        return [int(policy.placement[s]) for s in range(index.slice_count)]
    raise SimError(f"{policy.kind} does not define slice homes to enforce")


def enforce(index: SlicedIndexBase, policy: SchedulePolicy, topo: NumaTopology,
            mode: str | tuple[str, int] = "aggressive") -> EnforceReport:
    """Migrate every slice whose home changes to its new policy home.

    Aggressive mode fully migrates each changed slice (ascending slice
    order).  Lazy (k) spreads each slice's migration over k enforcement
    rounds, one sub-range per slice per round, walking sub-ranges in
    descending key order; the fixed point equals the aggressive one.
    The router mapping swap is atomic from the queries' perspective:
    enforcement runs between simulated runs.
    """
    violations = validate_policy(policy, topo, index.slice_count)
    if violations:
        raise SimError("policy failed validation: " + "; ".join(violations[:5]))
    targets = _target_homes(index, policy, topo)
    changed = [s for s in range(index.slice_count)
               if index.slices[s].home_node != targets[s]]
    report = EnforceReport(changed_slices=changed)
    if not changed:
        return report
    if mode == "aggressive":
        round_log = []
        for s in changed:
            index.migrate_slice(s, targets[s], "aggressive")
            report.traces += 1
            round_log.append((s, 0))
        report.rounds.append(round_log)
        return report
    tag, k = mode
    if tag != "lazy" or k < 1:
        raise SimError(f"unknown enforcement mode {mode!r}")
    subranges = {s: index.migration_subranges(s, k) for s in changed}
    for r in range(k):
        round_log = []
        for s in changed:
            subs = subranges[s]
            j = len(subs) - 1 - r
            if j < 0:
                continue
            lo, hi = subs[j]
            index.migratory_scan(lo, hi, targets[s])
            report.traces += 1
            round_log.append((s, j))
            if r == k - 1 or j == 0:
                index.slices[s].home_node = targets[s]
        report.rounds.append(round_log)
    return report
