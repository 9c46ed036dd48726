"""Schedule representation, baseline strategy generators, and validation.

Five policy kinds.  OS-emulation kinds place data without any slice
awareness and route queries to arbitrary workers.  The NUMA-aware kinds
pin slices to nodes; the thread-level kind additionally pins each slice
to one worker core, with data homed on that core's local node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .index.base import (PLACE_FIRST_TOUCH, PLACE_INTERLEAVE, PLACE_SLICE_LOCAL,
                         Placement)
from .topology import NumaTopology

OS_DEFAULT = "OsDefault"
OS_INTERLEAVE = "OsInterleave"
SE_NUMA = "SeNuma"
SN_NUMA = "SnNuma"
SN_THREAD = "SnThread"

BASELINE_STRATEGIES = ("os-d", "os-i", "se-n", "sn-n",
                       "grouped", "spread", "mixed", "random")


class PolicyError(ValueError):
    pass


@dataclass
class SchedulePolicy:
    kind: str
    strategy: str = ""
    seed: int = 0
    assignment: list[int] | None = None     # SnThread: slice -> core
    placement: list[int] | None = None      # SeNuma / SnNuma: slice -> node

    @property
    def name(self) -> str:
        if self.strategy == "random":
            return f"random-{self.seed}"
        return self.strategy or self.kind

    def to_json(self) -> dict:
        out = {"kind": self.kind, "strategy": self.strategy, "seed": self.seed}
        if self.assignment is not None:
            out["assignment"] = [int(c) for c in self.assignment]
        if self.placement is not None:
            out["placement"] = [int(n) for n in self.placement]
        return out

    @classmethod
    def from_json(cls, raw: dict) -> "SchedulePolicy":
        return cls(kind=raw["kind"], strategy=raw.get("strategy", ""),
                   seed=int(raw.get("seed", 0)),
                   assignment=raw.get("assignment"), placement=raw.get("placement"))

    @classmethod
    def load(cls, path: str | Path) -> "SchedulePolicy":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")


def _workers_grid_order(topo: NumaTopology) -> list[int]:
    """Workers sorted by grid tile (row-major), which follows physical order."""
    return sorted(topo.worker_cores, key=lambda c: topo.grid.tile_index(c))


def _node_blocks(t: int, n_nodes: int) -> list[int]:
    """Slice -> node for contiguous equal blocks per node."""
    return [min(n_nodes - 1, (s * n_nodes) // t) for s in range(t)]


def baseline_schedule(strategy: str, topo: NumaTopology, t: int,
                      seed: int = 0) -> SchedulePolicy:
    """One of the eight reference strategies."""
    if strategy == "os-d":
        return SchedulePolicy(OS_DEFAULT, "os-d", seed)
    if strategy == "os-i":
        return SchedulePolicy(OS_INTERLEAVE, "os-i", seed)
    if strategy == "se-n":
        return SchedulePolicy(SE_NUMA, "se-n", seed, placement=_node_blocks(t, topo.num_nodes))
    if strategy == "sn-n":
        return SchedulePolicy(SN_NUMA, "sn-n", seed, placement=_node_blocks(t, topo.num_nodes))

    workers = _workers_grid_order(topo)
    w = len(workers)
    if strategy == "grouped":
        block = -(-t // w)   # ceil
        assignment = [workers[min(s // block, w - 1)] for s in range(t)]
        return SchedulePolicy(SN_THREAD, "grouped", seed, assignment=assignment)
    if strategy == "spread":
        # consecutive slices alternate NUMA nodes, cycling each node's workers
        per_node = [topo.workers_on_node(n) for n in range(topo.num_nodes)]
        n_nodes = topo.num_nodes
        assignment = []
        for s in range(t):
            node = s % n_nodes
            ws = per_node[node]
            assignment.append(ws[(s // n_nodes) % len(ws)])
        return SchedulePolicy(SN_THREAD, "spread", seed, assignment=assignment)
    if strategy == "mixed":
        # contiguous block per socket, round-robin over nodes inside the socket
        n_sock = topo.sockets
        assignment = []
        for s in range(t):
            sock = min(n_sock - 1, (s * n_sock) // t)
            j = s - (sock * t) // n_sock
            nodes = [sock * topo.nodes_per_socket + i for i in range(topo.nodes_per_socket)]
            node = nodes[j % len(nodes)]
            ws = topo.workers_on_node(node)
            assignment.append(ws[(j // len(nodes)) % len(ws)])
        return SchedulePolicy(SN_THREAD, "mixed", seed, assignment=assignment)
    if strategy == "random":
        rng = np.random.default_rng(seed)
        assignment = [int(workers[i]) for i in rng.integers(0, w, size=t)]
        return SchedulePolicy(SN_THREAD, "random", seed, assignment=assignment)
    raise PolicyError(f"unknown strategy {strategy!r}")


def validate_policy(policy: SchedulePolicy, topo: NumaTopology, t: int) -> list[str]:
    """Return a list of violations; empty means the policy is usable."""
    out: list[str] = []
    if policy.kind not in (OS_DEFAULT, OS_INTERLEAVE, SE_NUMA, SN_NUMA, SN_THREAD):
        return [f"unknown policy kind {policy.kind!r}"]
    if policy.kind == SN_THREAD:
        a = policy.assignment or []
        workers = set(topo.worker_cores)
        for s in range(t):
            if s >= len(a):
                out.append(f"uncovered slice {s}")
                continue
            c = a[s]
            if c < 0 or c >= topo.num_cores:
                out.append(f"unknown core {c} for slice {s}")
            elif c not in workers:
                out.append(f"non-worker target core {c} for slice {s}")
        if len(a) > t:
            out.append(f"assignment covers {len(a)} slices, expected {t}")
    elif policy.kind in (SE_NUMA, SN_NUMA):
        p = policy.placement or []
        for s in range(t):
            if s >= len(p):
                out.append(f"uncovered slice {s}")
            elif not (0 <= p[s] < topo.num_nodes):
                out.append(f"unknown node {p[s]} for slice {s}")
    return out


def initial_placement(policy: SchedulePolicy, topo: NumaTopology, t: int) -> Placement:
    """Node-homing rule used when building an index under this policy."""
    if policy.kind == OS_DEFAULT:
        return Placement(PLACE_FIRST_TOUCH, topo.num_nodes,
                         builder_node=topo.node_of(topo.worker_cores[0]))
    if policy.kind == OS_INTERLEAVE:
        return Placement(PLACE_INTERLEAVE, topo.num_nodes)
    if policy.kind == SN_THREAD:
        nodes = np.array([topo.node_of(c) for c in policy.assignment], dtype=np.int64)
        return Placement(PLACE_SLICE_LOCAL, topo.num_nodes, slice_nodes=nodes)
    nodes = np.array(policy.placement, dtype=np.int64)
    return Placement(PLACE_SLICE_LOCAL, topo.num_nodes, slice_nodes=nodes)


def resolve_policy_arg(arg: str, topo: NumaTopology, t: int, seed: int = 0) -> SchedulePolicy:
    """CLI helper: a baseline name or `file:<path>` to a policy JSON."""
    if arg.startswith("file:"):
        policy = SchedulePolicy.load(arg[5:])
    elif arg in BASELINE_STRATEGIES:
        policy = baseline_schedule(arg, topo, t, seed)
    else:
        raise PolicyError(f"unknown policy {arg!r}")
    violations = validate_policy(policy, topo, t)
    if violations:
        raise PolicyError("invalid policy: " + "; ".join(violations[:5]))
    return policy
