"""Offline trajectory store and token-sequence generation.

Each stored trajectory is one JSON line: scheduling policy, hardware
snapshot, and context tags.  Thread-level trajectories tokenize into
3T+1 tokens (state, action, return-to-go per slice step, plus one meta
token carrying the system-wide off-core view), the input format of the
sequence-model scheduler.  Counter rows are normalized per feature with
dataset-wide statistics kept in a sidecar file; the store itself always
holds raw values.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .policies import SN_THREAD, SchedulePolicy
from .simkernel import NUM_COUNTERS, HardwareSnapshot, Trajectory
from .topology import NumaTopology

log = logging.getLogger(__name__)

META_LEN = 8


class DatasetError(ValueError):
    pass


# ------------------------------------------------------------------- store

class TrajectoryStore:
    """Append-only JSON-Lines store of trajectories."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, traj: Trajectory) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as fh:
            fh.write(json.dumps(traj.to_record(), sort_keys=True) + "\n")

    def load(self, **filters) -> list[Trajectory]:
        """All trajectories whose context matches the given tag filters.

        Corrupt lines are skipped with a warning and counted, not fatal.
        """
        out: list[Trajectory] = []
        skipped = 0
        if not self.path.exists():
            return out
        with open(self.path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                    traj = Trajectory.from_record(raw)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    skipped += 1
                    continue
                ctx = traj.context
                if all(ctx.get(k) == v for k, v in filters.items()):
                    out.append(traj)
        if skipped:
            log.warning("skipped %d corrupt record(s) in %s", skipped, self.path)
        return out

    def cell_keys(self) -> set[str]:
        keys = set()
        if not self.path.exists():
            return keys
        with open(self.path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                    keys.add(cell_key(raw["context"], raw["policy"]))
                except (json.JSONDecodeError, KeyError):
                    continue
        return keys

    def count(self) -> int:
        if not self.path.exists():
            return 0
        with open(self.path) as fh:
            return sum(1 for line in fh if line.strip())


def cell_key(context: dict, policy: dict) -> str:
    ident = {"context": context,
             "policy": {"kind": policy.get("kind"),
                        "strategy": policy.get("strategy"),
                        "seed": policy.get("seed")}}
    blob = json.dumps(ident, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ------------------------------------------------------------ normalization

@dataclass
class NormStats:
    counter_mean: np.ndarray
    counter_std: np.ndarray
    throughput_max: float
    throughput_mean: float
    n_rows: int

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.counter_mean) / self.counter_std

    def to_json(self) -> dict:
        return {"counter_mean": [float(v) for v in self.counter_mean],
                "counter_std": [float(v) for v in self.counter_std],
                "throughput_max": self.throughput_max,
                "throughput_mean": self.throughput_mean,
                "n_rows": self.n_rows}

    @classmethod
    def from_json(cls, raw: dict) -> "NormStats":
        return cls(counter_mean=np.array(raw["counter_mean"], dtype=np.float64),
                   counter_std=np.array(raw["counter_std"], dtype=np.float64),
                   throughput_max=float(raw["throughput_max"]),
                   throughput_mean=float(raw["throughput_mean"]),
                   n_rows=int(raw["n_rows"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NormStats":
        return cls.from_json(json.loads(Path(path).read_text()))


def compute_norm_stats(trajs: list[Trajectory]) -> NormStats:
    rows = np.concatenate([t.snapshot.per_slice_counters for t in trajs], axis=0)
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std[std < 1e-9] = 1.0
    thpts = [t.throughput for t in trajs]
    return NormStats(counter_mean=mean, counter_std=std,
                     throughput_max=max(thpts), throughput_mean=float(np.mean(thpts)),
                     n_rows=rows.shape[0])


# -------------------------------------------------------------- tokenization

@dataclass
class TokenSequence:
    """Explicit token sequence for one thread-level trajectory.

    Step t carries (state, action, return-to-go); the state fuses the
    view mask (tiles already holding slices), the position mask (tiles
    eligible for scheduling), and the machine view (per-tile accumulated
    counter rows).  One meta token is appended at the end.
    """

    view_masks: np.ndarray        # [T, m_i, m_j]
    position_masks: np.ndarray    # [T, m_i, m_j]
    machine_views: np.ndarray     # [T, m_i, m_j, H]
    actions: np.ndarray           # [T] core ids
    rtgs: np.ndarray              # [T]
    rewards: np.ndarray           # [T]
    meta: np.ndarray              # [META_LEN]

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def token_count(self) -> int:
        return 3 * self.steps + 1


def rtg_sequence(rewards, init: float) -> list[float]:
    """Return-to-go at each step: rtg_0 = init, rtg_{t+1} = rtg_t - r_t."""
    out = []
    rtg = float(init)
    for r in rewards:
        out.append(rtg)
        rtg -= float(r)
    return out


def meta_vector(snapshot: HardwareSnapshot, topo: NumaTopology) -> np.ndarray:
    """Fixed-length system-wide summary: processor shape plus off-core totals."""
    off = snapshot.offcore
    per_node = [sum(c) for c in off.channel_bytes]
    return np.array([
        topo.num_cores,
        topo.num_nodes,
        topo.sockets,
        off.total_channel_bytes(),
        max(per_node) if per_node else 0.0,
        off.total_interconnect_bytes(),
        float(off.link_bytes.max()) if off.link_bytes.size else 0.0,
        snapshot.wall_time,
    ], dtype=np.float64)


def tokenize(traj: Trajectory, topo: NumaTopology,
             norm: NormStats | None = None) -> TokenSequence:
    """Generate the 3T+1 token sequence for a thread-level trajectory.

    Steps run in ascending slice order.  The view mask and machine view
    at step t reflect only the slices placed at steps < t (all zeros at
    t0); the machine view aggregates counter rows by element-wise
    addition on the assigned tile.
    """
    if traj.policy.kind != SN_THREAD:
        raise DatasetError("only thread-level policies tokenize")
    t_slices = traj.snapshot.slice_count
    if traj.policy.assignment is None or len(traj.policy.assignment) != t_slices:
        raise DatasetError("assignment does not cover the snapshot's slices")
    mi, mj = topo.grid.dims
    rows = traj.snapshot.per_slice_counters
    if rows.shape != (t_slices, NUM_COUNTERS):
        raise DatasetError(f"snapshot shape {rows.shape} does not match "
                           f"(T={t_slices}, H={NUM_COUNTERS})")
    if norm is not None:
        rows = norm.apply(rows)

    pos = topo.grid.is_worker_tile.astype(np.float64)
    view = np.zeros((mi, mj))
    machine = np.zeros((mi, mj, NUM_COUNTERS))
    view_masks = np.zeros((t_slices, mi, mj))
    position_masks = np.zeros((t_slices, mi, mj))
    machine_views = np.zeros((t_slices, mi, mj, NUM_COUNTERS))
    actions = np.zeros(t_slices, dtype=np.int64)
    for s in range(t_slices):
        core = traj.policy.assignment[s]
        if core not in topo.worker_cores:
            raise DatasetError(f"slice {s} assigned to non-worker core {core}")
        view_masks[s] = view
        position_masks[s] = pos
        machine_views[s] = machine
        actions[s] = core
        r, c = topo.grid.tile_of[core]
        view = view.copy()
        view[r, c] = 1.0
        machine = machine.copy()
        machine[r, c] += rows[s]

    rewards = np.asarray(traj.snapshot.per_slice_throughput, dtype=np.float64)
    rtgs = np.array(rtg_sequence(rewards, traj.throughput), dtype=np.float64)
    return TokenSequence(
        view_masks=view_masks, position_masks=position_masks,
        machine_views=machine_views, actions=actions, rtgs=rtgs,
        rewards=rewards, meta=meta_vector(traj.snapshot, topo),
    )


# ------------------------------------------------------------------- export

TOKEN_MANIFEST = "manifest.json"
NORM_SIDECAR = "norm_stats.json"


def export_tokens(trajs: list[Trajectory], topo: NumaTopology,
                  out_dir: str | Path) -> list[Path]:
    """Write one compact .npz token container per thread-level trajectory.

    Layout (little-endian): counters f4[T,H] normalized per feature,
    actions i4[T], rtg/rewards f4[T] raw, position_mask f4[m_i,m_j],
    tile_row/tile_col i4[cores], core_is_worker i4[cores], meta f4[8],
    dims i4[T, H, m_i, m_j, cores].  States are reconstructed by the
    consumer: machine_view(t) = sum of counters[s] at the assigned tile
    over s < t, view_mask(t) likewise.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tokenizable = [t for t in trajs if t.policy.kind == SN_THREAD]
    if not tokenizable:
        raise DatasetError("no thread-level trajectories to export")
    norm = compute_norm_stats(tokenizable)
    norm.save(out / NORM_SIDECAR)
    mi, mj = topo.grid.dims
    tile_row = np.array([topo.grid.tile_of[c][0] for c in range(topo.num_cores)],
                        dtype=np.int32)
    tile_col = np.array([topo.grid.tile_of[c][1] for c in range(topo.num_cores)],
                        dtype=np.int32)
    is_worker = np.array([1 if c in set(topo.worker_cores) else 0
                          for c in range(topo.num_cores)], dtype=np.int32)
    paths = []
    names = []
    for i, traj in enumerate(tokenizable):
        seq = tokenize(traj, topo, norm=None)
        rows = norm.apply(traj.snapshot.per_slice_counters)
        t_slices = seq.steps
        path = out / f"traj_{i:05d}.npz"
        np.savez(
            path,
            counters=rows.astype("<f4"),
            actions=seq.actions.astype("<i4"),
            rtg=seq.rtgs.astype("<f4"),
            rewards=seq.rewards.astype("<f4"),
            position_mask=seq.position_masks[0].astype("<f4"),
            tile_row=tile_row, tile_col=tile_col, core_is_worker=is_worker,
            meta=seq.meta.astype("<f4"),
            dims=np.array([t_slices, NUM_COUNTERS, mi, mj, topo.num_cores],
                          dtype="<i4"),
            context=np.array(json.dumps(traj.context, sort_keys=True)),
        )
        paths.append(path)
        names.append(path.name)
    manifest = {"files": names, "topology": topo.name,
                "grid": [mi, mj], "counters": NUM_COUNTERS}
    (out / TOKEN_MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return paths
