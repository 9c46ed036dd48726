"""Deterministic query-stream generation.

A (spec, seed) pair fixes the byte-exact query sequence.  Operation
counts follow the requested mix exactly (largest-remainder rounding), so
empirical proportions land within 1% of the spec by construction for any
stream length.  Hot ranks are shuffled over the key space with a seeded
permutation so key popularity does not trivially align with slice order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

LOOKUP = "lookup"
INSERT = "insert"
SCAN = "scan"
KINDS = (LOOKUP, INSERT, SCAN)

ZIPFIAN = "zipfian"
UNIFORM = "uniform"
CLUSTERED = "clustered"


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    mix: dict[str, float]
    key_distribution: str = ZIPFIAN
    theta: float = 0.99
    scan_selectivity_max: float = 1e-5
    record_count: int = 100_000
    query_count: int = 100_000
    seed: int = 0

    def validate(self) -> None:
        if abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise WorkloadError("mix proportions must sum to 1")
        if any(k not in KINDS for k in self.mix):
            raise WorkloadError(f"unknown op kind in mix: {self.mix}")
        if self.key_distribution not in (ZIPFIAN, UNIFORM, CLUSTERED):
            raise WorkloadError(f"unknown key distribution {self.key_distribution!r}")
        if self.theta <= 0:
            raise WorkloadError("theta must be positive")
        if not (0.0 < self.scan_selectivity_max <= 1.0):
            raise WorkloadError("scan_selectivity_max must be in (0, 1]")
        if self.record_count <= 0:
            raise WorkloadError("degenerate key domain: record_count = 0")


CANNED: dict[str, WorkloadSpec] = {
    "rw50": WorkloadSpec("rw50", {LOOKUP: 0.5, INSERT: 0.5}, ZIPFIAN),
    "lookup100": WorkloadSpec("lookup100", {LOOKUP: 1.0}, UNIFORM),
    "scan95": WorkloadSpec("scan95", {SCAN: 0.95, INSERT: 0.05}, ZIPFIAN),
    "mixed50": WorkloadSpec("mixed50", {LOOKUP: 0.5, SCAN: 0.5}, ZIPFIAN),
    "clustered-rw50": WorkloadSpec("clustered-rw50", {LOOKUP: 0.5, INSERT: 0.5}, CLUSTERED),
}


def load_workload_spec(name_or_path: str, *, seed: int | None = None,
                       record_count: int | None = None,
                       query_count: int | None = None) -> WorkloadSpec:
    """Resolve a canned name or a JSON spec file, with optional overrides."""
    if name_or_path in CANNED:
        spec = CANNED[name_or_path]
    else:
        raw = json.loads(Path(name_or_path).read_text())
        spec = WorkloadSpec(
            name=raw.get("name", Path(name_or_path).stem),
            mix={k: float(v) for k, v in raw["mix"].items()},
            key_distribution=raw.get("key_distribution", ZIPFIAN),
            theta=float(raw.get("theta", 0.99)),
            scan_selectivity_max=float(raw.get("scan_selectivity_max", 1e-5)),
            record_count=int(raw.get("record_count", 100_000)),
            query_count=int(raw.get("query_count", 100_000)),
            seed=int(raw.get("seed", 0)),
        )
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if record_count is not None:
        overrides["record_count"] = record_count
    if query_count is not None:
        overrides["query_count"] = query_count
    if overrides:
        spec = replace(spec, **overrides)
    spec.validate()
    return spec


@dataclass(slots=True)
class Query:
    kind: str
    key: object            # int key, or (x, y) point for spatial indexes
    scan_length: int
    arrival_index: int


# ---------------------------------------------------------------- records

def make_records(n: int, seed: int, key_bits: int = 48) -> np.ndarray:
    """n unique sorted keys drawn uniformly from [0, 2^key_bits)."""
    if n <= 0:
        raise WorkloadError("record_count must be positive")
    rng = np.random.default_rng(seed)
    keys = np.unique(rng.integers(0, 1 << key_bits, size=n + max(64, n // 8), dtype=np.int64))
    while keys.size < n:
        extra = rng.integers(0, 1 << key_bits, size=n, dtype=np.int64)
        keys = np.unique(np.concatenate([keys, extra]))
    return keys[:n].copy()


def make_points(n: int, seed: int, grid_bits: int = 10) -> np.ndarray:
    """n 2D integer points on a (2^grid_bits)^2 grid; duplicates allowed."""
    if n <= 0:
        raise WorkloadError("record_count must be positive")
    rng = np.random.default_rng(seed)
    return rng.integers(0, 1 << grid_bits, size=(n, 2), dtype=np.int64)


def save_records_csv(keys: np.ndarray, path: str | Path) -> None:
    with open(path, "w") as fh:
        for k in keys:
            fh.write(f"{int(k)},{int(k)}\n")


def load_records_csv(path: str | Path) -> np.ndarray:
    keys = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                keys.append(int(line.split(",")[0]))
    return np.unique(np.asarray(keys, dtype=np.int64))


# ---------------------------------------------------------------- sampling

class ZipfianSampler:
    """Rank sampler with P(rank = k) proportional to k^(-theta), ranks 1..n."""

    def __init__(self, theta: float, n: int):
        if n < 1 or theta <= 0:
            raise WorkloadError("need n >= 1 and theta > 0")
        self.theta = theta
        self.n = n
        mass = np.arange(1, n + 1, dtype=np.float64) ** (-theta)
        self._cdf = np.cumsum(mass)
        self._cdf /= self._cdf[-1]

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        u = rng.random(size if size is not None else 1)
        ranks = np.searchsorted(self._cdf, u, side="left") + 1
        return ranks if size is not None else int(ranks[0])

    def pmf(self) -> np.ndarray:
        p = np.diff(self._cdf, prepend=0.0)
        return p


_sampler_cache: dict[tuple[float, int], ZipfianSampler] = {}


def zipfian_sample(rng: np.random.Generator, theta: float, n: int) -> int:
    """One Zipfian rank in [1, n], deterministic given the generator state."""
    key = (theta, n)
    if key not in _sampler_cache:
        _sampler_cache[key] = ZipfianSampler(theta, n)
    return _sampler_cache[key].sample(rng)


def _largest_remainder_counts(mix: dict[str, float], total: int) -> dict[str, int]:
    kinds = [k for k in KINDS if mix.get(k, 0.0) > 0.0]
    raw = {k: mix[k] * total for k in kinds}
    counts = {k: int(raw[k]) for k in kinds}
    short = total - sum(counts.values())
    by_frac = sorted(kinds, key=lambda k: (raw[k] - counts[k], k), reverse=True)
    for k in by_frac[:short]:
        counts[k] += 1
    return counts


def _sample_ranks(spec: WorkloadSpec, rng: np.random.Generator, n: int,
                  size: int) -> np.ndarray:
    """Ranks in [0, n) under the spec's key distribution."""
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    if spec.key_distribution == UNIFORM:
        return rng.integers(0, n, size=size)
    if spec.key_distribution == ZIPFIAN:
        return ZipfianSampler(spec.theta, n).sample(rng, size) - 1
    # clustered: mixture of Gaussians over the rank space, the synthetic
    # stand-in for a geographically clustered key distribution
    centers = rng.random(5)
    which = rng.integers(0, 5, size=size)
    pos = np.mod(centers[which] + 0.04 * rng.standard_normal(size), 1.0)
    return np.minimum((pos * n).astype(np.int64), n - 1)


def generate_workload(spec: WorkloadSpec, keys: np.ndarray) -> list[Query]:
    """Generate the full deterministic query stream over integer keys."""
    spec.validate()
    n = len(keys)
    if n == 0:
        raise WorkloadError("degenerate key domain: no records")
    rng = np.random.default_rng(spec.seed)
    q = spec.query_count
    counts = _largest_remainder_counts(spec.mix, q)

    kinds = np.concatenate([
        np.full(counts.get(k, 0), i, dtype=np.int8)
        for i, k in enumerate(KINDS)
    ]) if q else np.zeros(0, dtype=np.int8)
    kinds = rng.permutation(kinds)

    perm = rng.permutation(n)      # hot-rank shuffle over the key space
    lo, hi = int(keys[0]), int(keys[-1])
    span = max(1, hi - lo)

    n_lookup = counts.get(LOOKUP, 0)
    n_insert = counts.get(INSERT, 0)
    n_scan = counts.get(SCAN, 0)

    lookup_keys = keys[perm[_sample_ranks(spec, rng, n, n_lookup)]]
    insert_keys = rng.integers(lo, hi + 1, size=n_insert, dtype=np.int64)
    scan_starts = keys[perm[_sample_ranks(spec, rng, n, n_scan)]].astype(np.int64)
    scan_lengths = np.maximum(
        1, (rng.random(n_scan) * spec.scan_selectivity_max * span).astype(np.int64))
    # keep every scan inside the key domain
    overrun = scan_starts + scan_lengths > hi + 1
    scan_starts[overrun] = hi + 1 - scan_lengths[overrun]
    np.clip(scan_starts, lo, None, out=scan_starts)

    out: list[Query] = []
    ptr = [0, 0, 0]
    for i in range(q):
        ki = int(kinds[i])
        if ki == 0:
            out.append(Query(LOOKUP, int(lookup_keys[ptr[0]]), 0, i))
            ptr[0] += 1
        elif ki == 1:
            out.append(Query(INSERT, int(insert_keys[ptr[1]]), 0, i))
            ptr[1] += 1
        else:
            out.append(Query(SCAN, int(scan_starts[ptr[2]]), int(scan_lengths[ptr[2]]), i))
            ptr[2] += 1
    return out


def generate_spatial_workload(spec: WorkloadSpec, points: np.ndarray,
                              grid_bits: int = 10) -> list[Query]:
    """Spatial variant: lookups hit existing points, scans are square windows."""
    spec.validate()
    n = len(points)
    if n == 0:
        raise WorkloadError("degenerate domain: no points")
    rng = np.random.default_rng(spec.seed)
    q = spec.query_count
    counts = _largest_remainder_counts(spec.mix, q)
    kinds = np.concatenate([
        np.full(counts.get(k, 0), i, dtype=np.int8)
        for i, k in enumerate(KINDS)
    ]) if q else np.zeros(0, dtype=np.int8)
    kinds = rng.permutation(kinds)

    perm = rng.permutation(n)
    side_of_domain = 1 << grid_bits

    n_lookup = counts.get(LOOKUP, 0)
    n_insert = counts.get(INSERT, 0)
    n_scan = counts.get(SCAN, 0)

    lookup_pts = points[perm[_sample_ranks(spec, rng, n, n_lookup)]]
    insert_pts = rng.integers(0, side_of_domain, size=(n_insert, 2), dtype=np.int64)
    scan_centers = points[perm[_sample_ranks(spec, rng, n, n_scan)]]
    sides = np.maximum(1, (np.sqrt(rng.random(n_scan) * spec.scan_selectivity_max)
                           * side_of_domain).astype(np.int64))

    out: list[Query] = []
    ptr = [0, 0, 0]
    for i in range(q):
        ki = int(kinds[i])
        if ki == 0:
            p = lookup_pts[ptr[0]]
            out.append(Query(LOOKUP, (int(p[0]), int(p[1])), 0, i))
            ptr[0] += 1
        elif ki == 1:
            p = insert_pts[ptr[1]]
            out.append(Query(INSERT, (int(p[0]), int(p[1])), 0, i))
            ptr[1] += 1
        else:
            c = scan_centers[ptr[2]]
            s = int(sides[ptr[2]])
            x0 = min(max(0, int(c[0]) - s // 2), side_of_domain - s)
            y0 = min(max(0, int(c[1]) - s // 2), side_of_domain - s)
            out.append(Query(SCAN, (x0, y0), s, i))
            ptr[2] += 1
    return out
