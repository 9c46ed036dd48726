"""Shared machinery for sliced indexes.

A sliced index partitions its records into T contiguous key ranges by
record rank (equal population).  Every structural node carries a NUMA
home; query execution emits an AccessTrace of (node, home) touches that
the simulator turns into cache probes and latency charges.  Migratory
range scans rehome every node they touch and are the enforcement
primitive for new placements.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from ..workload import INSERT, LOOKUP, SCAN, Query

LINE_BYTES = 64

# placement modes used when homing freshly created nodes
PLACE_SLICE_LOCAL = "slice-local"    # home follows the slice of the node's max key
PLACE_FIRST_TOUCH = "first-touch"    # everything on the builder's node
PLACE_INTERLEAVE = "interleave"      # round-robin nodes at index-node granularity


class IndexError_(ValueError):
    pass


@dataclass
class Placement:
    mode: str
    num_nodes: int
    slice_nodes: np.ndarray | None = None   # per-slice home, slice modes only
    builder_node: int = 0


@dataclass(slots=True)
class IndexSlice:
    slice_id: int
    lo: int                  # inclusive linear-key lower bound (-inf sentinel on slice 0)
    hi: int                  # exclusive upper bound (+inf sentinel on the last slice)
    home_node: int
    assigned_core: int | None = None


class AccessTrace:
    """Ordered node touches for one executed query (or migratory scan)."""

    __slots__ = ("accesses", "comparisons", "result_size")

    def __init__(self):
        self.accesses: list[tuple[int, int, bool, int]] = []
        self.comparisons = 0
        self.result_size = 0

    def read(self, node) -> None:
        self.accesses.append((node.nid, node.home, False, LINE_BYTES))

    def write(self, node) -> None:
        self.accesses.append((node.nid, node.home, True, LINE_BYTES))

    def __len__(self) -> int:
        return len(self.accesses)


def slice_bounds_from_ranks(sorted_keys: np.ndarray, t: int) -> list[int]:
    """Interior slice boundaries (T-1 keys) splitting records into T
    equal-population runs."""
    n = len(sorted_keys)
    if t > n:
        raise IndexError_(f"slice count {t} exceeds record count {n}")
    return [int(sorted_keys[(i * n) // t]) for i in range(1, t)]


class SlicedIndexBase:
    """Common slice directory, routing helpers, and migration engine.

    Subclasses supply the structural operations over a linear key space
    (the raw key for B+-trees, the Hilbert index for 2D R-trees).
    """

    kind = "base"

    def __init__(self, bounds: list[int], placement: Placement):
        self.bounds = bounds
        self.slice_count = len(bounds) + 1
        self.placement = placement
        self._next_nid = 0
        self.slices: list[IndexSlice] = []
        lo = None
        for i in range(self.slice_count):
            hi = bounds[i] if i < len(bounds) else None
            home = self._slice_home(i)
            self.slices.append(IndexSlice(i, lo, hi, home))
            lo = hi

    # -- placement ---------------------------------------------------------

    def _slice_home(self, slice_id: int) -> int:
        p = self.placement
        if p.mode == PLACE_SLICE_LOCAL:
            return int(p.slice_nodes[slice_id])
        if p.mode == PLACE_FIRST_TOUCH:
            return p.builder_node
        return 0  # interleave: per-node homes assigned at allocation

    def _alloc_nid(self) -> int:
        nid = self._next_nid
        self._next_nid += 1
        return nid

    def _home_for_new_node(self, nid: int, max_key: int, inherit: int | None) -> int:
        p = self.placement
        if p.mode == PLACE_INTERLEAVE:
            return nid % p.num_nodes
        if p.mode == PLACE_FIRST_TOUCH:
            return p.builder_node
        if inherit is not None:
            return inherit      # splits keep data where it was
        return self.slices[self.slice_of_key(max_key)].home_node

    # -- slice directory ----------------------------------------------------

    def slice_of_key(self, key: int) -> int:
        return bisect_right(self.bounds, key)

    def linear_key(self, raw_key) -> int:
        """Map a query key onto the linear slicing key space."""
        return raw_key

    def linear_range(self, query: Query) -> tuple[int, int]:
        k = self.linear_key(query.key)
        if query.kind == SCAN:
            return k, k + query.scan_length
        return k, k + 1

    def slices_of(self, query: Query) -> list[int]:
        """Slice ids the query touches: singleton for point ops, the
        contiguous overlapped run for scans."""
        lo, hi = self.linear_range(query)
        first = self.slice_of_key(lo)
        if query.kind != SCAN:
            return [first]
        last = self.slice_of_key(hi - 1)
        return list(range(first, last + 1))

    # -- structure hooks (subclass responsibilities) -------------------------

    def execute(self, query: Query) -> AccessTrace:
        raise NotImplementedError

    def migratory_scan(self, lo: int | None, hi: int | None, dest: int) -> AccessTrace:
        """Rehome every node touched while walking linear range [lo, hi)."""
        raise NotImplementedError

    def keys_in_range(self, lo: int | None, hi: int | None) -> list[int]:
        raise NotImplementedError

    def all_leaves(self):
        raise NotImplementedError

    # -- migration -----------------------------------------------------------

    def migration_subranges(self, slice_id: int, k: int) -> list[tuple[int | None, int | None]]:
        """Split a slice's key range into k equal-population sub-ranges."""
        s = self.slices[slice_id]
        if k <= 1:
            return [(s.lo, s.hi)]
        keys = self.keys_in_range(s.lo, s.hi)
        if not keys:
            return [(s.lo, s.hi)]
        cuts = [keys[(i * len(keys)) // k] for i in range(1, k)]
        edges = [s.lo] + cuts + [s.hi]
        return [(edges[i], edges[i + 1]) for i in range(k)]

    def migrate_slice(self, slice_id: int, dest_node: int,
                      mode: str | tuple[str, int] = "aggressive") -> list[AccessTrace]:
        """Move a slice to dest_node.

        Aggressive mode issues a single migratory scan over the full key
        range.  Lazy (k) issues k scans over equal sub-ranges, walked in
        descending key order so interleaved lazy enforcement converges to
        the same interior-node homes as aggressive enforcement.
        Self-migration is a no-op.
        """
        if slice_id < 0 or slice_id >= self.slice_count:
            raise IndexError_(f"unknown slice {slice_id}")
        s = self.slices[slice_id]
        if s.home_node == dest_node:
            return []
        if mode == "aggressive":
            subranges = [(s.lo, s.hi)]
        else:
            tag, k = mode
            if tag != "lazy" or k < 1:
                raise IndexError_(f"unknown migration mode {mode!r}")
            subranges = list(reversed(self.migration_subranges(slice_id, k)))
        traces = [self.migratory_scan(lo, hi, dest_node) for lo, hi in subranges]
        s.home_node = dest_node
        return traces
