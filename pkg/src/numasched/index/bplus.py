"""Sliced in-memory B+-tree.

Bulk-loaded from sorted records at a configurable fill factor, then
supports point lookups, upsert-style inserts with node splits, and
range scans over the leaf chain.  Every node carries a NUMA home.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right

import numpy as np

from ..workload import INSERT, LOOKUP, SCAN, Query
from .base import (AccessTrace, IndexError_, Placement, SlicedIndexBase,
                   slice_bounds_from_ranks)

KEY_MIN = -(1 << 62)
KEY_MAX = 1 << 62

LEAF_CAPACITY = 255      # hard cap on leaf entry count
INNER_CAPACITY = 255     # keys per inner node


class BPlusNode:
    __slots__ = ("nid", "is_leaf", "keys", "vals", "children", "next_leaf", "home")

    def __init__(self, nid: int, is_leaf: bool, home: int):
        self.nid = nid
        self.is_leaf = is_leaf
        self.keys: list[int] = []
        self.vals: list[int] = []
        self.children: list[BPlusNode] = []
        self.next_leaf: BPlusNode | None = None
        self.home = home

    def max_key(self) -> int:
        return self.keys[-1] if self.keys else KEY_MIN


class BPlusTree(SlicedIndexBase):
    kind = "bplus"

    def __init__(self, keys: np.ndarray, slice_count: int, placement: Placement,
                 leaf_fill: float = 0.7, leaf_capacity: int = LEAF_CAPACITY,
                 inner_capacity: int = INNER_CAPACITY):
        if len(keys) == 0:
            raise IndexError_("records must be non-empty")
        if slice_count < 1:
            raise IndexError_("slice count must be >= 1")
        keys = np.asarray(keys, dtype=np.int64)
        if np.any(np.diff(keys) <= 0):
            keys = np.unique(keys)
        super().__init__(slice_bounds_from_ranks(keys, slice_count), placement)
        self.leaf_capacity = leaf_capacity
        self.inner_capacity = inner_capacity
        target = max(1, min(leaf_capacity, int(leaf_capacity * leaf_fill)))
        self.root = self._bulk_load(keys, target)

    # -- construction --------------------------------------------------------

    def _new_node(self, is_leaf: bool, max_key: int, inherit: int | None = None) -> BPlusNode:
        nid = self._alloc_nid()
        home = self._home_for_new_node(nid, max_key, inherit)
        return BPlusNode(nid, is_leaf, home)

    def _bulk_load(self, keys: np.ndarray, per_leaf: int) -> BPlusNode:
        leaves: list[BPlusNode] = []
        for i in range(0, len(keys), per_leaf):
            chunk = [int(k) for k in keys[i:i + per_leaf]]
            leaf = self._new_node(True, chunk[-1])
            leaf.keys = chunk
            leaf.vals = list(chunk)
            if leaves:
                leaves[-1].next_leaf = leaf
            leaves.append(leaf)
        level = leaves
        fanout = max(2, min(self.inner_capacity + 1, int((self.inner_capacity + 1) * 0.7)))
        while len(level) > 1:
            parents = []
            for i in range(0, len(level), fanout):
                group = level[i:i + fanout]
                parent = self._new_node(False, group[-1].max_key())
                parent.children = group
                parent.keys = [self._subtree_min(c) for c in group[1:]]
                parents.append(parent)
            level = parents
        return level[0]

    @staticmethod
    def _subtree_min(node: BPlusNode) -> int:
        while not node.is_leaf:
            node = node.children[0]
        return node.keys[0]

    # -- query execution ------------------------------------------------------

    def execute(self, query: Query) -> AccessTrace:
        if query.kind == LOOKUP:
            return self.lookup(query.key)
        if query.kind == INSERT:
            return self.insert(query.key, query.key)
        if query.kind == SCAN:
            return self.scan(query.key, query.scan_length)
        raise IndexError_(f"unknown query kind {query.kind!r}")

    def _descend(self, key: int, trace: AccessTrace, stack: list | None = None) -> BPlusNode:
        node = self.root
        while not node.is_leaf:
            trace.read(node)
            trace.comparisons += max(1, len(node.keys).bit_length())
            if stack is not None:
                stack.append(node)
            node = node.children[bisect_right(node.keys, key)]
        return node

    def lookup(self, key: int) -> AccessTrace:
        trace = AccessTrace()
        leaf = self._descend(key, trace)
        trace.read(leaf)
        trace.comparisons += max(1, len(leaf.keys).bit_length())
        i = bisect_left(leaf.keys, key)
        if i < len(leaf.keys) and leaf.keys[i] == key:
            trace.result_size = 1
        return trace

    def scan(self, start: int, length: int) -> AccessTrace:
        trace = AccessTrace()
        hi = start + length
        leaf = self._descend(start, trace)
        count = 0
        while leaf is not None:
            trace.read(leaf)
            trace.comparisons += max(1, len(leaf.keys).bit_length())
            ks = leaf.keys
            if ks and ks[0] >= hi:
                break
            a = bisect_left(ks, start)
            b = bisect_left(ks, hi)
            count += b - a
            trace.comparisons += b - a
            if b < len(ks):
                break
            leaf = leaf.next_leaf
        trace.result_size = count
        return trace

    def insert(self, key: int, value: int) -> AccessTrace:
        trace = AccessTrace()
        stack: list[BPlusNode] = []
        leaf = self._descend(key, trace, stack)
        trace.read(leaf)
        trace.comparisons += max(1, len(leaf.keys).bit_length())
        i = bisect_left(leaf.keys, key)
        if i < len(leaf.keys) and leaf.keys[i] == key:
            leaf.vals[i] = value            # upsert
            trace.write(leaf)
            return trace
        leaf.keys.insert(i, key)
        leaf.vals.insert(i, value)
        trace.write(leaf)

        node = leaf
        while (len(node.keys) > (self.leaf_capacity if node.is_leaf else self.inner_capacity)):
            sep, right = self._split(node)
            trace.write(node)
            trace.write(right)
            if stack:
                parent = stack.pop()
                j = bisect_right(parent.keys, sep)
                parent.keys.insert(j, sep)
                parent.children.insert(j + 1, right)
                trace.write(parent)
                node = parent
            else:
                new_root = self._new_node(False, right.max_key(), inherit=node.home)
                new_root.keys = [sep]
                new_root.children = [node, right]
                self.root = new_root
                trace.write(new_root)
                break
        return trace

    def _split(self, node: BPlusNode) -> tuple[int, BPlusNode]:
        mid = len(node.keys) // 2
        right = self._new_node(node.is_leaf, node.max_key(), inherit=node.home)
        if node.is_leaf:
            sep = node.keys[mid]
            right.keys = node.keys[mid:]
            right.vals = node.vals[mid:]
            node.keys = node.keys[:mid]
            node.vals = node.vals[:mid]
            right.next_leaf = node.next_leaf
            node.next_leaf = right
        else:
            sep = node.keys[mid]
            right.keys = node.keys[mid + 1:]
            right.children = node.children[mid + 1:]
            node.keys = node.keys[:mid]
            node.children = node.children[:mid + 1]
        return sep, right

    # -- slice / migration support ---------------------------------------------

    def _first_leaf(self) -> BPlusNode:
        node = self.root
        while not node.is_leaf:
            node = node.children[0]
        return node

    def all_leaves(self):
        leaf = self._first_leaf()
        while leaf is not None:
            yield leaf
            leaf = leaf.next_leaf

    def keys_in_range(self, lo: int | None, hi: int | None) -> list[int]:
        lo_k = KEY_MIN if lo is None else lo
        hi_k = KEY_MAX if hi is None else hi
        out: list[int] = []
        trace = AccessTrace()
        leaf = self._descend(lo_k, trace)
        while leaf is not None:
            ks = leaf.keys
            if ks and ks[0] >= hi_k:
                break
            a = bisect_left(ks, lo_k)
            b = bisect_left(ks, hi_k)
            out.extend(ks[a:b])
            if b < len(ks):
                break
            leaf = leaf.next_leaf
        return out

    def migratory_scan(self, lo: int | None, hi: int | None, dest: int) -> AccessTrace:
        lo_k = KEY_MIN if lo is None else lo
        hi_k = KEY_MAX if hi is None else hi
        trace = AccessTrace()

        def visit(node: BPlusNode) -> None:
            node.home = dest
            trace.write(node)
            if node.is_leaf:
                return
            a = bisect_right(node.keys, lo_k)
            b = bisect_right(node.keys, hi_k - 1)
            for child in node.children[a:b + 1]:
                visit(child)

        visit(self.root)
        return trace
