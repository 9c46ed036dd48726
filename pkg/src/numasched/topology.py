"""NUMA machine model.

A parametric stand-in for real multi-socket hardware: cores grouped into
NUMA nodes and sockets, per-pair core latencies, per-(core, node) DRAM
load latencies, memory-channel and interconnect capacities, plus the 2D
core grid that the scheduler presents to the learning agent.

Base latency constants are configuration, not measurements.  Only the
relative ratios between tiers (intra-node / intra-socket / cross-socket)
carry meaning, and the presets encode the published heterogeneity ratios
of the machines they are named after.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# cache-level tags accepted by access_cost
L1 = "l1"
LLC = "llc"
DRAM = "dram"

DEFAULT_L1_NS = 2.0
DEFAULT_LLC_NS = 20.0
DEFAULT_DRAM_NS = 90.0
DEFAULT_CORE_NS = 20.0
DEFAULT_CHANNELS_PER_NODE = 2
DEFAULT_CHANNEL_BANDWIDTH = 2.0e9       # bytes per simulated second per channel
DEFAULT_INTERCONNECT_CAPACITY = 8.0e9   # bytes per simulated second per directed link

PRESET_NAMES = (
    "skx-4s-snc2",
    "milan-2s-nps4",
    "gh200-1s",
    "sandybridge-4s",
    "milan-2s-nps1",
    "tiny-2n4c",
)


class TopologyError(ValueError):
    """Invalid topology: unknown preset, overlapping roles, bad latencies."""


@dataclass(frozen=True)
class GridLayout:
    """Row-major packing of cores onto an m_i x m_j tile grid.

    Cores are laid out in (socket, node, core) order so that physically
    adjacent cores occupy adjacent tiles.  Tiles beyond the core count and
    tiles of non-worker cores are permanently ineligible for scheduling.
    """

    dims: tuple[int, int]
    tile_of: tuple[tuple[int, int], ...]
    is_worker_tile: np.ndarray

    def tile_index(self, core: int) -> int:
        r, c = self.tile_of[core]
        return r * self.dims[1] + c


def grid_dims(n_cores: int) -> tuple[int, int]:
    """Near-square (m_i, m_j), m_i <= m_j, with the smallest product >= n_cores."""
    best = None
    for a in range(1, n_cores + 1):
        b = math.ceil(n_cores / a)
        if a > b:
            break
        key = (a * b, b - a)
        if best is None or key < best[0]:
            best = (key, (a, b))
    return best[1]


@dataclass
class NumaTopology:
    name: str
    sockets: int
    nodes_per_socket: int
    cores_per_node: int
    worker_cores: tuple[int, ...]
    router_cores: tuple[int, ...]
    core_sweeper_cores: tuple[int, ...]
    offcore_sweeper_core: tuple[int, ...]
    stitcher_core: tuple[int, ...]
    core_latency: np.ndarray     # [cores, cores] ns, symmetric, zero diagonal
    dram_latency: np.ndarray     # [cores, nodes] ns
    l1_latency: float
    llc_latency: float
    imc_channels: tuple[int, ...]        # per node
    channel_bandwidth: float             # bytes / simulated second / channel
    interconnect_capacity: float         # bytes / simulated second / directed link
    grid: GridLayout = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.sockets * self.nodes_per_socket

    @property
    def num_cores(self) -> int:
        return self.num_nodes * self.cores_per_node

    def node_of(self, core: int) -> int:
        return core // self.cores_per_node

    def socket_of_node(self, node: int) -> int:
        return node // self.nodes_per_socket

    def socket_of(self, core: int) -> int:
        return self.socket_of_node(self.node_of(core))

    def workers_on_node(self, node: int) -> list[int]:
        return [c for c in self.worker_cores if self.node_of(c) == node]

    def validate(self) -> None:
        n = self.num_cores
        sets = [
            self.worker_cores,
            self.router_cores,
            self.core_sweeper_cores,
            self.offcore_sweeper_core,
            self.stitcher_core,
        ]
        seen: set[int] = set()
        for s in sets:
            for c in s:
                if c < 0 or c >= n:
                    raise TopologyError(f"core id {c} out of range")
                if c in seen:
                    raise TopologyError(f"core {c} assigned more than one role")
                seen.add(c)
        if seen != set(range(n)):
            raise TopologyError("every core must carry exactly one role")
        for node in range(self.num_nodes):
            if not self.workers_on_node(node):
                raise TopologyError(f"node {node} has no worker core")
        if self.core_latency.shape != (n, n):
            raise TopologyError("core_latency shape mismatch")
        if not np.allclose(self.core_latency, self.core_latency.T):
            raise TopologyError("core_latency must be symmetric")
        if np.any(np.diag(self.core_latency) != 0.0):
            raise TopologyError("core_latency diagonal must be zero")
        # tier monotonicity: intra-node <= intra-socket <= cross-socket
        tiers: dict[int, list[float]] = {0: [], 1: [], 2: []}
        for a in range(n):
            for b in range(a + 1, n):
                if self.node_of(a) == self.node_of(b):
                    tiers[0].append(self.core_latency[a, b])
                elif self.socket_of(a) == self.socket_of(b):
                    tiers[1].append(self.core_latency[a, b])
                else:
                    tiers[2].append(self.core_latency[a, b])
        prev_max = 0.0
        for t in (0, 1, 2):
            if tiers[t]:
                if min(tiers[t]) < prev_max - 1e-9:
                    raise TopologyError("core latency not monotone in distance")
                prev_max = max(prev_max, max(tiers[t]))
        for c in range(n):
            local = self.dram_latency[c, self.node_of(c)]
            if np.any(self.dram_latency[c] < local - 1e-9):
                raise TopologyError("local DRAM must be the cheapest node")
            if not (self.l1_latency < self.llc_latency < local):
                raise TopologyError("need L1 < LLC < local DRAM")
        if len(self.grid.tile_of) != n:
            raise TopologyError("grid does not cover all cores")
        if self.grid.dims[0] * self.grid.dims[1] < n:
            raise TopologyError("grid too small for core count")
        if len({t for t in self.grid.tile_of}) != n:
            raise TopologyError("grid tile mapping must be injective")


def access_cost(topology: NumaTopology, exec_core: int, level: str,
                node: int | None = None) -> float:
    """Congestion-free access latency in ns for one index-node touch.

    `level` is L1, LLC or DRAM; DRAM requires the home `node`.
    """
    if exec_core < 0 or exec_core >= topology.num_cores:
        raise TopologyError(f"unknown core {exec_core}")
    if level == L1:
        return topology.l1_latency
    if level == LLC:
        return topology.llc_latency
    if level == DRAM:
        if node is None or node < 0 or node >= topology.num_nodes:
            raise TopologyError(f"unknown node {node}")
        return float(topology.dram_latency[exec_core, node])
    raise TopologyError(f"unknown cache level {level!r}")


def _assign_roles(sockets: int, nps: int, cpn: int):
    """One router and one core sweeper per node, one off-core sweeper and
    one stitcher per machine; on 3-core nodes the sweeper/stitcher duties
    fold onto the router core."""
    n_nodes = sockets * nps
    workers: list[int] = []
    routers: list[int] = []
    sweepers: list[int] = []
    offcore: list[int] = []
    stitcher: list[int] = []
    stitch_node = 1 if n_nodes > 1 else 0
    for node in range(n_nodes):
        local = list(range(node * cpn, (node + 1) * cpn))
        routers.append(local.pop(0))
        if cpn >= 4:
            sweepers.append(local.pop(0))
            if node == 0:
                offcore.append(local.pop(0))
            if node == stitch_node:
                stitcher.append(local.pop(0))
        workers.extend(local)
    return tuple(workers), tuple(routers), tuple(sweepers), tuple(offcore), tuple(stitcher)


def _build(name, sockets, nps, cpn, core_factor_fn, dram_factor_fn, *,
           base_core=DEFAULT_CORE_NS, base_l1=DEFAULT_L1_NS, base_llc=DEFAULT_LLC_NS,
           base_dram=DEFAULT_DRAM_NS, channels=DEFAULT_CHANNELS_PER_NODE,
           channel_bandwidth=DEFAULT_CHANNEL_BANDWIDTH,
           interconnect_capacity=DEFAULT_INTERCONNECT_CAPACITY,
           jitter=0.0, seed=0) -> NumaTopology:
    n_nodes = sockets * nps
    n_cores = n_nodes * cpn
    dims = grid_dims(n_cores)
    tile_of = tuple((c // dims[1], c % dims[1]) for c in range(n_cores))

    core_lat = np.zeros((n_cores, n_cores))
    for a in range(n_cores):
        for b in range(a + 1, n_cores):
            f = core_factor_fn(a, b, tile_of, dims)
            core_lat[a, b] = core_lat[b, a] = base_core * f
    dram_lat = np.zeros((n_cores, n_nodes))
    for c in range(n_cores):
        for nd in range(n_nodes):
            dram_lat[c, nd] = base_dram * dram_factor_fn(c, nd)
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        noise = 1.0 + jitter * rng.random((n_cores, n_nodes))
        dram_lat = dram_lat * noise

    workers, routers, sweepers, offcore, stitcher = _assign_roles(sockets, nps, cpn)
    worker_set = set(workers)
    is_worker = np.zeros(dims, dtype=bool)
    for c in workers:
        is_worker[tile_of[c]] = True

    topo = NumaTopology(
        name=name, sockets=sockets, nodes_per_socket=nps, cores_per_node=cpn,
        worker_cores=workers, router_cores=routers, core_sweeper_cores=sweepers,
        offcore_sweeper_core=offcore, stitcher_core=stitcher,
        core_latency=core_lat, dram_latency=dram_lat,
        l1_latency=base_l1, llc_latency=base_llc,
        imc_channels=tuple([channels] * n_nodes),
        channel_bandwidth=float(channel_bandwidth),
        interconnect_capacity=float(interconnect_capacity),
        grid=GridLayout(dims=dims, tile_of=tile_of, is_worker_tile=is_worker),
    )
    assert worker_set == set(topo.worker_cores)
    topo.validate()
    return topo


def _tier_factors(nps: int, cpn: int, same_socket: float, cross_socket: float):
    def core_f(a, b, tile_of, dims):
        na, nb = a // cpn, b // cpn
        if na == nb:
            return 1.0
        if na // nps == nb // nps:
            return same_socket
        return cross_socket

    def dram_f(c, nd):
        nc = c // cpn
        if nc == nd:
            return 1.0
        if nc // nps == nd // nps:
            return same_socket
        return cross_socket

    return core_f, dram_f


def _chiplet_factors(nps: int, cpn: int, step: float, cross_socket: float):
    # same socket: latency grows with chiplet distance, 1 + step * |i - j|
    def core_f(a, b, tile_of, dims):
        na, nb = a // cpn, b // cpn
        if na == nb:
            return 1.0
        if na // nps == nb // nps:
            return 1.0 + step * abs(na % nps - nb % nps)
        return cross_socket

    def dram_f(c, nd):
        nc = c // cpn
        if nc == nd:
            return 1.0
        if nc // nps == nd // nps:
            return 1.0 + step * abs(nc % nps - nd % nps)
        return cross_socket

    return core_f, dram_f


def _grid_distance_factors(max_factor: float):
    # single node: adjacent cores at base latency, scaling linearly with
    # Manhattan tile distance up to max_factor at the far corner
    def core_f(a, b, tile_of, dims):
        (ra, ca), (rb, cb) = tile_of[a], tile_of[b]
        d = abs(ra - rb) + abs(ca - cb)
        dmax = (dims[0] - 1) + (dims[1] - 1)
        if dmax <= 1:
            return 1.0
        return 1.0 + (max_factor - 1.0) * ((d - 1) / (dmax - 1))

    def dram_f(c, nd):
        return 1.0

    return core_f, dram_f


def _make_preset(name: str) -> NumaTopology:
    if name == "skx-4s-snc2":
        cf, df = _tier_factors(2, 6, same_socket=1.1, cross_socket=3.0)
        return _build(name, 4, 2, 6, cf, df)
    if name == "milan-2s-nps4":
        cf, df = _chiplet_factors(4, 6, step=1.0, cross_socket=4.0)
        return _build(name, 2, 4, 6, cf, df)
    if name == "gh200-1s":
        cf, df = _grid_distance_factors(1.5)
        return _build(name, 1, 1, 16, cf, df)
    if name == "sandybridge-4s":
        cf, df = _tier_factors(1, 6, same_socket=2.0, cross_socket=2.0)
        return _build(name, 4, 1, 6, cf, df)
    if name == "milan-2s-nps1":
        cf, df = _tier_factors(1, 10, same_socket=4.0, cross_socket=4.0)
        return _build(name, 2, 1, 10, cf, df)
    if name == "tiny-2n4c":
        cf, df = _tier_factors(2, 3, same_socket=1.5, cross_socket=1.5)

        def dram_tiny(c, nd):
            return 1.0 if c // 3 == nd else 2.0

        return _build(name, 1, 2, 3, cf, dram_tiny)
    raise TopologyError(f"unknown preset {name!r}")


def build_topology(preset: str | None = None, spec: dict | str | Path | None = None,
                   seed: int = 0) -> NumaTopology:
    """Build a validated topology from a preset name or an explicit spec.

    Presets are deterministic; `seed` only matters for explicit specs that
    enable latency jitter (disabled by default).
    """
    if (preset is None) == (spec is None):
        raise TopologyError("pass exactly one of preset or spec")
    if preset is not None:
        return _make_preset(preset)
    if isinstance(spec, (str, Path)):
        spec = json.loads(Path(spec).read_text())
    sockets = int(spec["sockets"])
    nps = int(spec["nodes_per_socket"])
    cpn = int(spec["cores_per_node"])
    cfac = spec.get("core_factors", {})
    dfac = spec.get("dram_factors", {})
    base = spec.get("base", {})
    cf, _ = _tier_factors(nps, cpn,
                          same_socket=float(cfac.get("same_socket", 1.0)),
                          cross_socket=float(cfac.get("cross_socket", 2.0)))
    _, df = _tier_factors(nps, cpn,
                          same_socket=float(dfac.get("same_socket", 1.0)),
                          cross_socket=float(dfac.get("cross_socket", 2.0)))
    return _build(
        spec.get("name", "custom"), sockets, nps, cpn, cf, df,
        base_core=float(base.get("core_ns", DEFAULT_CORE_NS)),
        base_l1=float(base.get("l1_ns", DEFAULT_L1_NS)),
        base_llc=float(base.get("llc_ns", DEFAULT_LLC_NS)),
        base_dram=float(base.get("dram_ns", DEFAULT_DRAM_NS)),
        channels=int(spec.get("imc_channels", DEFAULT_CHANNELS_PER_NODE)),
        channel_bandwidth=float(spec.get("channel_bandwidth", DEFAULT_CHANNEL_BANDWIDTH)),
        interconnect_capacity=float(spec.get("interconnect_capacity",
                                             DEFAULT_INTERCONNECT_CAPACITY)),
        jitter=float(spec.get("jitter", 0.0)), seed=seed,
    )
