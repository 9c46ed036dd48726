"""Token-container and trajectory-record parsing.

The simulator lab exports one .npz per thread-level trajectory
(counters f4[T,H] normalized, actions i4[T], rtg/rewards f4[T] raw,
position_mask f4[m_i,m_j], tile_row/tile_col/core_is_worker i4[cores],
meta f4[8], dims i4[T,H,m_i,m_j,cores]) plus a norm_stats.json sidecar.
States are reconstructed here: machine_view(t) is the running per-tile
sum of counter rows for the slices placed before t, stacked with the
view mask and position mask as extra channels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NORM_SIDECAR = "norm_stats.json"
MANIFEST = "manifest.json"
META_LEN = 8


@dataclass
class TokenTrajectory:
    counters: np.ndarray       # [T, H] normalized float32
    actions: np.ndarray        # [T] int64 core ids
    rtg: np.ndarray            # [T] float32 raw (queries/second units)
    rewards: np.ndarray        # [T] float32 raw
    position_mask: np.ndarray  # [m_i, m_j] float32
    tile_row: np.ndarray       # [cores]
    tile_col: np.ndarray       # [cores]
    core_is_worker: np.ndarray  # [cores] 0/1
    meta: np.ndarray           # [8] float32 raw
    context: dict

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def grid(self) -> tuple[int, int]:
        return self.position_mask.shape

    def states(self) -> np.ndarray:
        """[T, H+2, m_i, m_j]: machine-view channels, view mask, position mask."""
        t, h = self.counters.shape
        mi, mj = self.position_mask.shape
        out = np.zeros((t, h + 2, mi, mj), dtype=np.float32)
        machine = np.zeros((h, mi, mj), dtype=np.float32)
        view = np.zeros((mi, mj), dtype=np.float32)
        for s in range(t):
            out[s, :h] = machine
            out[s, h] = view
            out[s, h + 1] = self.position_mask
            r, c = self.tile_row[self.actions[s]], self.tile_col[self.actions[s]]
            machine[:, r, c] += self.counters[s]
            view[r, c] = 1.0
        return out


def load_container(path: str | Path) -> TokenTrajectory:
    d = np.load(path)
    ctx = {}
    if "context" in d.files:
        try:
            ctx = json.loads(str(d["context"]))
        except (json.JSONDecodeError, TypeError):
            ctx = {}
    return TokenTrajectory(
        counters=d["counters"].astype(np.float32),
        actions=d["actions"].astype(np.int64),
        rtg=d["rtg"].astype(np.float32),
        rewards=d["rewards"].astype(np.float32),
        position_mask=d["position_mask"].astype(np.float32),
        tile_row=d["tile_row"].astype(np.int64),
        tile_col=d["tile_col"].astype(np.int64),
        core_is_worker=d["core_is_worker"].astype(np.int64),
        meta=d["meta"].astype(np.float32),
        context=ctx,
    )


def load_token_dir(path: str | Path) -> tuple[list[TokenTrajectory], dict]:
    """All containers in a token directory plus the normalization sidecar."""
    root = Path(path)
    files = sorted(root.glob("*.npz"))
    if not files:
        raise FileNotFoundError(f"no token containers under {root}")
    trajs = [load_container(f) for f in files]
    stats = json.loads((root / NORM_SIDECAR).read_text())
    shapes = {(t.steps, t.grid) for t in trajs}
    if len(shapes) != 1:
        raise ValueError(f"containers disagree on shape: {shapes}")
    return trajs, stats


# ------------------------------------------------- trajectory-store records

def load_store_records(path: str | Path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                continue
    return records


def snapshot_from_record(record: dict, norm_stats: dict,
                         static_meta: np.ndarray) -> dict:
    """Extract what a rollout needs from one stored trajectory record:
    normalized counter rows, raw per-slice rewards, and the meta vector
    rebuilt from off-core totals plus the training-time processor shape."""
    snap = record["snapshot"]
    rows = np.array(snap["per_slice_counters"], dtype=np.float64)
    mean = np.array(norm_stats["counter_mean"], dtype=np.float64)
    std = np.array(norm_stats["counter_std"], dtype=np.float64)
    rows = ((rows - mean) / std).astype(np.float32)
    rewards = np.array(snap["per_slice_throughput"], dtype=np.float32)
    channel = snap["offcore"]["channel_bytes"]
    link = np.array(snap["offcore"]["link_bytes"], dtype=np.float64)
    per_node = [sum(c) for c in channel]
    meta = np.array([
        static_meta[0], static_meta[1], static_meta[2],
        float(sum(per_node)), float(max(per_node)) if per_node else 0.0,
        float(link.sum()), float(link.max()) if link.size else 0.0,
        float(snap["wall_time"]),
    ], dtype=np.float32)
    return {"rows": rows, "rewards": rewards, "meta": meta,
            "throughput": float(record["throughput"])}
