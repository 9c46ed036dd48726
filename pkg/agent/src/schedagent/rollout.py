"""Return-conditioned rollout: emit a new slice-to-core schedule.

The return-to-go starts at the desired throughput (a multiple of the
best observed in the training dataset), the state starts empty, and the
model places slices one at a time.  After each placement the machine
view absorbs the recent snapshot's counter row for that slice, and the
return-to-go drops by the slice's recent reward.  Decoding is argmax
(deterministic) over position-mask-eligible workers.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .containers import load_store_records, snapshot_from_record
from .model import DtModel, load_checkpoint, masked_logits


def infer_schedule(ckpt_dir: str | Path, snapshot: dict,
                   target_rtg: float | None = None,
                   target_mult: float = 1.1) -> list[int]:
    """Roll out a full assignment (slice -> worker core id)."""
    model, payload = load_checkpoint(ckpt_dir)
    cfg = model.cfg
    t_steps = cfg.t_steps
    rows = np.asarray(snapshot["rows"], dtype=np.float32)
    rewards = np.asarray(snapshot["rewards"], dtype=np.float32)
    if rows.shape != (t_steps, cfg.n_counters):
        raise ValueError(f"snapshot rows {rows.shape} do not match the "
                         f"checkpoint's (T={t_steps}, H={cfg.n_counters})")
    rtg_scale = payload["rtg_scale"]
    if target_rtg is None:
        target_rtg = target_mult * payload["norm_stats"]["throughput_max"]

    meta_mean = np.array(payload["meta_mean"], dtype=np.float32)
    meta_std = np.array(payload["meta_std"], dtype=np.float32)
    meta = (np.asarray(snapshot["meta"], dtype=np.float32) - meta_mean) / meta_std
    core_is_worker = torch.tensor(payload["core_is_worker"])
    tile_row = payload["tile_row"]
    tile_col = payload["tile_col"]
    position_mask = np.array(payload["position_mask"], dtype=np.float32)
    mi, mj = cfg.grid
    h = cfg.n_counters

    states = np.zeros((1, t_steps, h + 2, mi, mj), dtype=np.float32)
    machine = np.zeros((h, mi, mj), dtype=np.float32)
    view = np.zeros((mi, mj), dtype=np.float32)
    rtg = np.zeros((1, t_steps), dtype=np.float32)
    actions = np.zeros((1, t_steps), dtype=np.int64)

    model.eval()
    run_rtg = float(target_rtg)
    assignment: list[int] = []
    with torch.no_grad():
        meta_t = torch.from_numpy(meta).unsqueeze(0)
        for t in range(t_steps):
            rtg[0, t] = run_rtg / rtg_scale
            states[0, t, :h] = machine
            states[0, t, h] = view
            states[0, t, h + 1] = position_mask
            logits = model(torch.from_numpy(rtg), torch.from_numpy(states),
                           torch.from_numpy(actions), meta_t)
            step_logits = masked_logits(logits[0, t], core_is_worker)
            core = int(step_logits.argmax())
            assignment.append(core)
            actions[0, t] = core
            r, c = tile_row[core], tile_col[core]
            machine[:, r, c] += rows[t]
            view[r, c] = 1.0
            run_rtg -= float(rewards[t])
    if any(not core_is_worker[c] for c in assignment):
        raise RuntimeError("rollout chose a non-worker core")
    return assignment


def pick_snapshot(store_path: str | Path, index: int | None,
                  norm_stats: dict, static_meta) -> dict:
    """Choose the recent snapshot record: an explicit index, or the
    best-throughput thread-level record in the store."""
    records = load_store_records(store_path)
    threadlevel = [r for r in records if r["policy"].get("kind") == "SnThread"]
    if not threadlevel:
        raise ValueError(f"no thread-level records in {store_path}")
    if index is not None:
        record = records[index]
    else:
        record = max(threadlevel, key=lambda r: r["throughput"])
    return snapshot_from_record(record, norm_stats,
                                np.asarray(static_meta, dtype=np.float32))


def save_policy(assignment: list[int], path: str | Path,
                strategy: str = "learned", seed: int = 0) -> None:
    payload = {"kind": "SnThread", "strategy": strategy, "seed": seed,
               "assignment": [int(c) for c in assignment]}
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")
