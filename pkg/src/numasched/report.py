"""Throughput comparison reports: delimited output plus rendered figures.

Every number is recomputed from stored trajectories alone, so a report
regenerated from the same store is byte-identical (the CSV; figure files
carry no run-dependent data but PNG encoding is not contractual).
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .simkernel import C_REMOTE, Trajectory

CSV_FIELDS = ("policy", "seed", "throughput", "normalized",
              "remote_dram_loads", "is_learned", "wins")


def context_of(traj: Trajectory) -> tuple:
    ctx = traj.context
    return (ctx.get("topology"), ctx.get("workload"), ctx.get("index"),
            ctx.get("slices"), ctx.get("records"), ctx.get("queries"))


def comparison_rows(trajs: list[Trajectory],
                    learned_names: set[str] | None = None) -> list[dict]:
    """One row per policy, normalized to the best non-learned throughput."""
    learned_names = learned_names or set()
    rows = []
    for t in trajs:
        rows.append({
            "policy": t.policy.name,
            "seed": t.policy.seed,
            "throughput": t.throughput,
            "remote_dram_loads": t.snapshot.counter_total(C_REMOTE),
            "is_learned": t.policy.name in learned_names,
        })
    baselines = [r["throughput"] for r in rows if not r["is_learned"]]
    best = max(baselines) if baselines else max(r["throughput"] for r in rows)
    for r in rows:
        r["normalized"] = r["throughput"] / best if best else 0.0
        r["wins"] = r["is_learned"] and r["throughput"] >= best
    rows.sort(key=lambda r: (-r["throughput"], r["policy"], r["seed"]))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        writer.writerow([
            r["policy"], r["seed"], f"{r['throughput']:.6f}",
            f"{r['normalized']:.6f}", int(r["remote_dram_loads"]),
            int(r["is_learned"]), int(r["wins"]),
        ])
    return buf.getvalue()


def write_report(rows: list[dict], out_dir: str | Path, name: str,
                 title: str = "") -> tuple[Path, Path]:
    """Write <name>.csv and <name>.png under out_dir; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    csv_path.write_text(rows_to_csv(rows))

    fig_path = out / f"{name}.png"
    labels = [f"{r['policy']}" for r in rows]
    values = [r["normalized"] for r in rows]
    colors = ["#d62728" if r["is_learned"] else "#1f77b4" for r in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(rows) + 1.5), 3.2))
    ax.bar(range(len(rows)), values, color=colors)
    ax.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("throughput / best baseline")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return csv_path, fig_path
