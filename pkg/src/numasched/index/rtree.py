"""Sliced 2D R-tree over integer grid points.

Bulk-loaded by packing points in Hilbert order; slices are contiguous
runs of the Hilbert-sorted records, so slice adjacency approximates
spatial adjacency.  Point lookups, window scans, and inserts with
quadratic-free splits (Hilbert-sort splits) are supported.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right

import numpy as np

from ..workload import INSERT, LOOKUP, SCAN, Query
from .base import (AccessTrace, IndexError_, Placement, SlicedIndexBase,
                   slice_bounds_from_ranks)
from .hilbert import hilbert_index, window_cell_ranges

MIN_FANOUT = 20
MAX_FANOUT = 50


def _mbr_of_points(pts) -> list[int]:
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return [min(xs), min(ys), max(xs), max(ys)]


def _mbr_union(boxes) -> list[int]:
    return [min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes)]


def _mbr_contains(b, x, y) -> bool:
    return b[0] <= x <= b[2] and b[1] <= y <= b[3]


def _mbr_intersects(b, x0, y0, x1, y1) -> bool:
    return not (b[2] < x0 or b[0] > x1 or b[3] < y0 or b[1] > y1)


def _enlargement(b, x, y) -> int:
    nx0, ny0 = min(b[0], x), min(b[1], y)
    nx1, ny1 = max(b[2], x), max(b[3], y)
    return (nx1 - nx0) * (ny1 - ny0) - (b[2] - b[0]) * (b[3] - b[1])


class RTreeNode:
    __slots__ = ("nid", "is_leaf", "points", "hvals", "children", "mbr", "home")

    def __init__(self, nid: int, is_leaf: bool, home: int):
        self.nid = nid
        self.is_leaf = is_leaf
        self.points: list[tuple[int, int]] = []
        self.hvals: list[int] = []
        self.children: list[RTreeNode] = []
        self.mbr: list[int] = [0, 0, 0, 0]
        self.home = home


class RTree2D(SlicedIndexBase):
    kind = "rtree2d"

    def __init__(self, points: np.ndarray, slice_count: int, placement: Placement,
                 min_fanout: int = MIN_FANOUT, max_fanout: int = MAX_FANOUT,
                 hilbert_order: int = 10):
        if len(points) == 0:
            raise IndexError_("records must be non-empty")
        if slice_count < 1:
            raise IndexError_("slice count must be >= 1")
        self.order = hilbert_order
        self.min_fanout = min_fanout
        self.max_fanout = max_fanout
        pts = [(int(p[0]), int(p[1])) for p in points]
        hv = np.array([hilbert_index(self.order, x, y) for x, y in pts], dtype=np.int64)
        srt = np.argsort(hv, kind="stable")
        hv_sorted = hv[srt]
        super().__init__(slice_bounds_from_ranks(hv_sorted, slice_count), placement)
        self.root = self._bulk_load([pts[i] for i in srt], [int(h) for h in hv_sorted])

    def _new_node(self, is_leaf: bool, max_h: int, inherit: int | None = None) -> RTreeNode:
        nid = self._alloc_nid()
        home = self._home_for_new_node(nid, max_h, inherit)
        return RTreeNode(nid, is_leaf, home)

    def _bulk_load(self, pts, hv) -> RTreeNode:
        per = max(self.min_fanout, min(self.max_fanout, int(self.max_fanout * 0.7)))
        leaves: list[RTreeNode] = []
        for i in range(0, len(pts), per):
            chunk = pts[i:i + per]
            leaf = self._new_node(True, hv[min(i + per, len(pts)) - 1])
            leaf.points = chunk
            leaf.hvals = hv[i:i + per]
            leaf.mbr = _mbr_of_points(chunk)
            leaves.append(leaf)
        level = leaves
        while len(level) > 1:
            parents = []
            for i in range(0, len(level), per):
                group = level[i:i + per]
                parent = self._new_node(False, max(g.hvals[-1] if g.is_leaf else 0
                                                   for g in group) or self._max_h(group))
                parent.children = group
                parent.mbr = _mbr_union([g.mbr for g in group])
                parents.append(parent)
            level = parents
        return level[0]

    @staticmethod
    def _max_h(group) -> int:
        out = 0
        for g in group:
            out = max(out, g.hvals[-1] if g.is_leaf and g.hvals else 0)
        return out

    def linear_key(self, raw_key) -> int:
        x, y = raw_key
        return hilbert_index(self.order, int(x), int(y))

    def slices_of(self, query: Query) -> list[int]:
        if query.kind != SCAN:
            return [self.slice_of_key(self.linear_key(query.key))]
        x0, y0 = query.key
        side = query.scan_length
        x1, y1 = x0 + side - 1, y0 + side - 1
        hit: set[int] = set()
        for lo, hi in window_cell_ranges(self.order, x0, y0, x1, y1):
            first = self.slice_of_key(lo)
            last = self.slice_of_key(hi - 1)
            hit.update(range(first, last + 1))
        return sorted(hit)

    # -- queries ----------------------------------------------------------------

    def execute(self, query: Query) -> AccessTrace:
        if query.kind == LOOKUP:
            return self.point_query(*query.key)
        if query.kind == INSERT:
            return self.insert(*query.key)
        if query.kind == SCAN:
            x0, y0 = query.key
            s = query.scan_length
            return self.window_query(x0, y0, x0 + s - 1, y0 + s - 1)
        raise IndexError_(f"unknown query kind {query.kind!r}")

    def point_query(self, x: int, y: int) -> AccessTrace:
        trace = AccessTrace()
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            trace.read(node)
            trace.comparisons += max(1, len(node.children or node.points).bit_length())
            if node.is_leaf:
                count += sum(1 for p in node.points if p == (x, y))
            else:
                for child in reversed(node.children):
                    if _mbr_contains(child.mbr, x, y):
                        stack.append(child)
        trace.result_size = count
        return trace

    def window_query(self, x0: int, y0: int, x1: int, y1: int) -> AccessTrace:
        trace = AccessTrace()
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            trace.read(node)
            trace.comparisons += max(1, len(node.children or node.points).bit_length())
            if node.is_leaf:
                count += sum(1 for (px, py) in node.points
                             if x0 <= px <= x1 and y0 <= py <= y1)
            else:
                for child in reversed(node.children):
                    if _mbr_intersects(child.mbr, x0, y0, x1, y1):
                        stack.append(child)
        trace.result_size = count
        return trace

    def insert(self, x: int, y: int) -> AccessTrace:
        trace = AccessTrace()
        h = hilbert_index(self.order, x, y)
        node = self.root
        stack: list[RTreeNode] = []
        while not node.is_leaf:
            trace.read(node)
            stack.append(node)
            best = min(node.children,
                       key=lambda c: (_enlargement(c.mbr, x, y),
                                      (c.mbr[2] - c.mbr[0]) * (c.mbr[3] - c.mbr[1]),
                                      c.nid))
            node = best
        i = bisect_left(node.hvals, h)
        node.points.insert(i, (x, y))
        node.hvals.insert(i, h)
        node.mbr = _mbr_union([node.mbr, [x, y, x, y]])
        trace.write(node)
        trace.comparisons += max(1, len(node.points).bit_length())
        for anc in stack:
            if not _mbr_contains(anc.mbr, x, y):
                anc.mbr = _mbr_union([anc.mbr, [x, y, x, y]])
                trace.write(anc)

        cur = node
        while len(cur.points if cur.is_leaf else cur.children) > self.max_fanout:
            right = self._split(cur)
            trace.write(cur)
            trace.write(right)
            if stack:
                parent = stack.pop()
                parent.children.append(right)
                parent.mbr = _mbr_union([parent.mbr, right.mbr])
                trace.write(parent)
                cur = parent
            else:
                new_root = self._new_node(False, 0, inherit=cur.home)
                new_root.children = [cur, right]
                new_root.mbr = _mbr_union([cur.mbr, right.mbr])
                self.root = new_root
                trace.write(new_root)
                break
        return trace

    def _split(self, node: RTreeNode) -> RTreeNode:
        right = self._new_node(node.is_leaf, 0, inherit=node.home)
        if node.is_leaf:
            mid = len(node.points) // 2
            right.points = node.points[mid:]
            right.hvals = node.hvals[mid:]
            node.points = node.points[:mid]
            node.hvals = node.hvals[:mid]
            right.mbr = _mbr_of_points(right.points)
            node.mbr = _mbr_of_points(node.points)
        else:
            node.children.sort(key=lambda c: hilbert_index(
                self.order, (c.mbr[0] + c.mbr[2]) // 2, (c.mbr[1] + c.mbr[3]) // 2))
            mid = len(node.children) // 2
            right.children = node.children[mid:]
            node.children = node.children[:mid]
            right.mbr = _mbr_union([c.mbr for c in right.children])
            node.mbr = _mbr_union([c.mbr for c in node.children])
        return right

    # -- slice / migration support -----------------------------------------------

    def all_leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def keys_in_range(self, lo: int | None, hi: int | None) -> list[int]:
        lo_k = 0 if lo is None else lo
        hi_k = 1 << 62 if hi is None else hi
        out: list[int] = []
        for leaf in self.all_leaves():
            a = bisect_left(leaf.hvals, lo_k)
            b = bisect_left(leaf.hvals, hi_k)
            out.extend(leaf.hvals[a:b])
        out.sort()
        return out

    def migratory_scan(self, lo: int | None, hi: int | None, dest: int) -> AccessTrace:
        lo_k = 0 if lo is None else lo
        hi_k = 1 << 62 if hi is None else hi
        trace = AccessTrace()

        def overlaps(node: RTreeNode) -> bool:
            if node.is_leaf:
                a = bisect_left(node.hvals, lo_k)
                return a < bisect_left(node.hvals, hi_k)
            return any(overlaps(c) for c in node.children)

        def visit(node: RTreeNode) -> None:
            node.home = dest
            trace.write(node)
            if node.is_leaf:
                return
            for child in node.children:
                if overlaps(child):
                    visit(child)

        visit(self.root)
        return trace
