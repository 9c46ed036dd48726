"""Sliced main-memory indexes with NUMA-homed nodes and access traces."""

from __future__ import annotations

import numpy as np

from .base import (AccessTrace, IndexError_, IndexSlice, Placement,
                   PLACE_FIRST_TOUCH, PLACE_INTERLEAVE, PLACE_SLICE_LOCAL,
                   SlicedIndexBase, LINE_BYTES)
from .bplus import BPlusTree
from .rtree import RTree2D

INDEX_KINDS = ("bplus", "rtree2d")


def build_index(kind: str, records: np.ndarray, slice_count: int,
                placement: Placement) -> SlicedIndexBase:
    """Build a sliced index over the records under the given placement."""
    if kind == "bplus":
        return BPlusTree(records, slice_count, placement)
    if kind == "rtree2d":
        return RTree2D(records, slice_count, placement)
    raise IndexError_(f"unknown index kind {kind!r}")
