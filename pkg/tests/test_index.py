from bisect import bisect_left, insort

import numpy as np
import pytest

from numasched.index import build_index
from numasched.index.base import IndexError_, Placement, PLACE_FIRST_TOUCH, \
    PLACE_INTERLEAVE, PLACE_SLICE_LOCAL
from numasched.index.bplus import BPlusTree, LEAF_CAPACITY
from numasched.index.hilbert import hilbert_index, hilbert_point, window_cell_ranges
from numasched.index.rtree import RTree2D
from numasched.workload import (INSERT, LOOKUP, SCAN, Query, generate_workload,
                                load_workload_spec, make_points, make_records)


def _local_placement(n_slices, n_nodes=2):
    nodes = np.array([s % n_nodes for s in range(n_slices)], dtype=np.int64)
    return Placement(PLACE_SLICE_LOCAL, n_nodes, slice_nodes=nodes)


class SortedOracle:
    """Flat sorted-array reference for answer correctness."""

    def __init__(self, keys):
        self.keys = sorted(int(k) for k in keys)

    def lookup(self, k):
        i = bisect_left(self.keys, k)
        return 1 if i < len(self.keys) and self.keys[i] == k else 0

    def insert(self, k):
        i = bisect_left(self.keys, k)
        if not (i < len(self.keys) and self.keys[i] == k):
            insort(self.keys, k)

    def scan(self, start, length):
        return bisect_left(self.keys, start + length) - bisect_left(self.keys, start)


# ---------------------------------------------------------------- B+-tree

def test_build_slice_populations(small_keys):
    tree = build_index("bplus", small_keys, 256, _local_placement(256))
    assert tree.slice_count == 256
    counts = np.bincount([tree.slice_of_key(int(k)) for k in small_keys],
                         minlength=256)
    assert counts.min() >= len(small_keys) // 256 - 1
    assert counts.max() <= len(small_keys) // 256 + 2


def test_one_record_per_slice():
    keys = np.array([10, 20, 30, 40], dtype=np.int64)
    tree = build_index("bplus", keys, 4, _local_placement(4))
    assert [tree.slice_of_key(k) for k in (10, 20, 30, 40)] == [0, 1, 2, 3]


def test_slice_count_exceeding_records_rejected():
    with pytest.raises(IndexError_):
        build_index("bplus", np.array([1, 2, 3], dtype=np.int64), 4,
                    _local_placement(4))


def test_slices_partition_domain(small_keys):
    tree = build_index("bplus", small_keys, 64, _local_placement(64))
    # every key (including ones outside the record set) maps to exactly one slice
    probe = np.concatenate([small_keys, small_keys + 1, [0, 2 ** 48]])
    for k in probe[:2000]:
        s = tree.slice_of_key(int(k))
        assert 0 <= s < 64


def test_lookup_trace_is_root_to_leaf(small_keys):
    tree = build_index("bplus", small_keys, 8, _local_placement(8))
    height = 1
    node = tree.root
    while not node.is_leaf:
        height += 1
        node = node.children[0]
    tr = tree.lookup(int(small_keys[123]))
    assert len(tr.accesses) == height
    assert all(not is_write for (_, _, is_write, _) in tr.accesses)
    assert tr.result_size == 1


def test_insert_split_emits_writes(small_keys):
    tree = build_index("bplus", small_keys[:2000], 4, _local_placement(4))
    # force a split by hammering one leaf with fresh keys
    leaf = tree._first_leaf()
    base = leaf.keys[0]
    wrote_split = False
    k = base
    for i in range(1, LEAF_CAPACITY + 2):
        k = base + i * 3 + 1
        tr = tree.insert(k, k)
        writes = sum(1 for (_, _, w, _) in tr.accesses if w)
        if writes >= 2:
            wrote_split = True
            break
    assert wrote_split


def test_mixed_ops_agree_with_sorted_oracle(small_keys):
    spec = load_workload_spec("scan95", seed=5, record_count=len(small_keys),
                              query_count=8_000)
    tree = build_index("bplus", small_keys, 32, _local_placement(32))
    oracle = SortedOracle(small_keys)
    for q in generate_workload(spec, small_keys):
        tr = tree.execute(q)
        if q.kind == LOOKUP:
            assert tr.result_size == oracle.lookup(q.key)
        elif q.kind == SCAN:
            assert tr.result_size == oracle.scan(q.key, q.scan_length)
        else:
            oracle.insert(q.key)
        assert len(tr.accesses) > 0


def test_scan_result_size_uniform_selectivity():
    keys = np.arange(0, 100_000, dtype=np.int64)       # dense uniform domain
    tree = build_index("bplus", keys, 16, _local_placement(16))
    oracle = SortedOracle(keys)
    s = 0.001
    length = int(s * 100_000)
    for start in (0, 12_345, 50_000, 99_000):
        tr = tree.scan(start, length)
        assert tr.result_size == oracle.scan(start, length)
        assert abs(tr.result_size - length) <= 1


def test_structural_bounds_after_inserts(small_keys):
    tree = build_index("bplus", small_keys[:5000], 8, _local_placement(8))
    rng = np.random.default_rng(0)
    for k in rng.integers(0, 2 ** 40, size=4000):
        tree.insert(int(k), int(k))
    for leaf in tree.all_leaves():
        assert 1 <= len(leaf.keys) <= LEAF_CAPACITY

    def check(node):
        if node.is_leaf:
            return
        assert len(node.children) == len(node.keys) + 1
        for c in node.children:
            check(c)

    check(tree.root)


def test_slices_of_point_and_boundary(small_keys):
    tree = build_index("bplus", small_keys, 16, _local_placement(16))
    k = int(small_keys[1000])
    s = tree.slice_of_key(k)
    assert tree.slices_of(Query(LOOKUP, k, 0, 0)) == [s]
    # scan spanning the boundary of two adjacent slices
    b = tree.bounds[3]
    q = Query(SCAN, b - 1, 2, 0)
    assert tree.slices_of(q) == [3, 4]


def test_slices_of_scans_against_interval_oracle(small_keys):
    tree = build_index("bplus", small_keys, 32, _local_placement(32))
    spec = load_workload_spec("scan95", seed=9, record_count=len(small_keys),
                              query_count=1_000)
    bounds = [None] + list(tree.bounds) + [None]
    for q in generate_workload(spec, small_keys):
        if q.kind != SCAN:
            continue
        got = tree.slices_of(q)
        lo, hi = q.key, q.key + q.scan_length
        expect = []
        for s in range(tree.slice_count):
            s_lo = bounds[s]
            s_hi = bounds[s + 1]
            if (s_hi is None or lo < s_hi) and (s_lo is None or hi > s_lo):
                expect.append(s)
        assert got == expect


def test_placement_modes(small_keys):
    ft = build_index("bplus", small_keys[:3000], 4,
                     Placement(PLACE_FIRST_TOUCH, 2, builder_node=1))
    assert all(leaf.home == 1 for leaf in ft.all_leaves())
    il = build_index("bplus", small_keys[:3000], 4, Placement(PLACE_INTERLEAVE, 2))
    homes = {leaf.nid % 2 == leaf.home for leaf in il.all_leaves()}
    assert homes == {True}


# ---------------------------------------------------------------- Hilbert

def test_hilbert_bijective_order4():
    seen = set()
    for x in range(16):
        for y in range(16):
            d = hilbert_index(4, x, y)
            assert hilbert_point(4, d) == (x, y)
            seen.add(d)
    assert seen == set(range(256))


def test_hilbert_window_ranges_cover_window():
    order = 6
    x0, y0, x1, y1 = 10, 20, 25, 33
    ranges = window_cell_ranges(order, x0, y0, x1, y1, max_level=order)
    covered = set()
    for lo, hi in ranges:
        covered.update(range(lo, hi))
    expect = {hilbert_index(order, x, y)
              for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)}
    assert expect == covered


# ---------------------------------------------------------------- R-tree

def test_rtree_slices_brute_force():
    pts = make_points(10_000, seed=3)
    tree = build_index("rtree2d", pts, 16, _local_placement(16))
    hv = [hilbert_index(tree.order, int(x), int(y)) for x, y in pts]
    bounds = [None] + list(tree.bounds) + [None]
    for i in range(0, len(pts), 7):
        s = tree.slice_of_key(hv[i])
        lo, hi = bounds[s], bounds[s + 1]
        assert lo is None or hv[i] >= lo
        assert hi is None or hv[i] < hi
        assert 0 <= s < 16


def test_rtree_point_and_window_against_brute_force():
    pts = make_points(4_000, seed=11)
    tree = build_index("rtree2d", pts, 8, _local_placement(8))
    pt_set = [(int(x), int(y)) for x, y in pts]
    rng = np.random.default_rng(4)
    for _ in range(200):
        x, y = pt_set[int(rng.integers(0, len(pt_set)))]
        tr = tree.point_query(x, y)
        assert tr.result_size == sum(1 for p in pt_set if p == (x, y))
    for _ in range(100):
        x0, y0 = rng.integers(0, 900, size=2)
        side = int(rng.integers(1, 120))
        tr = tree.window_query(int(x0), int(y0), int(x0) + side, int(y0) + side)
        expect = sum(1 for (px, py) in pt_set
                     if x0 <= px <= x0 + side and y0 <= py <= y0 + side)
        assert tr.result_size == expect


def test_rtree_insert_fanout_bounds():
    pts = make_points(3_000, seed=5)
    tree = build_index("rtree2d", pts, 4, _local_placement(4))
    extra = make_points(2_000, seed=6)
    for x, y in extra:
        tree.insert(int(x), int(y))

    def check(node, is_root):
        size = len(node.points) if node.is_leaf else len(node.children)
        assert size <= tree.max_fanout
        if not is_root:
            assert size >= 1
        if not node.is_leaf:
            for c in node.children:
                check(c, False)

    check(tree.root, True)
    # every point still findable
    for x, y in extra[:50]:
        assert tree.point_query(int(x), int(y)).result_size >= 1
