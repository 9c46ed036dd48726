"""Hilbert space-filling curve on a 2^order x 2^order grid."""

from __future__ import annotations


def hilbert_index(order: int, x: int, y: int) -> int:
    """Distance along the order-`order` Hilbert curve of grid cell (x, y)."""
    rx = ry = 0
    d = 0
    s = 1 << (order - 1)
    while s > 0:
        rx = 1 if (x & s) > 0 else 0
        ry = 1 if (y & s) > 0 else 0
        d += s * s * ((3 * rx) ^ ry)
        # rotate quadrant
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        s >>= 1
    return d


def hilbert_point(order: int, d: int) -> tuple[int, int]:
    """Inverse of hilbert_index."""
    x = y = 0
    t = d
    s = 1
    while s < (1 << order):
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x = s - 1 - x
                y = s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s <<= 1
    return x, y


def aligned_cell_range(order: int, level: int, cx: int, cy: int) -> tuple[int, int]:
    """Hilbert index range [lo, hi) covered by an aligned square cell.

    The cell has side 2^(order-level) and sits at coarse coordinates
    (cx, cy) on the level-`level` grid.  Aligned cells map to contiguous
    curve segments, which makes window decomposition exact.
    """
    span = 1 << (2 * (order - level))
    coarse = hilbert_index(level, cx, cy) if level > 0 else 0
    return coarse * span, (coarse + 1) * span


def window_cell_ranges(order: int, x0: int, y0: int, x1: int, y1: int,
                       max_level: int = 6) -> list[tuple[int, int]]:
    """Decompose the closed window [x0,x1]x[y0,y1] into aligned cells and
    return their Hilbert ranges. `max_level` caps the recursion depth so a
    window never explodes into more than 4^max_level pieces."""
    out: list[tuple[int, int]] = []

    def visit(level: int, cx: int, cy: int) -> None:
        side = 1 << (order - level)
        px, py = cx * side, cy * side
        if px > x1 or py > y1 or px + side - 1 < x0 or py + side - 1 < y0:
            return
        if (x0 <= px and px + side - 1 <= x1 and y0 <= py and py + side - 1 <= y1) \
                or level >= max_level or side == 1:
            out.append(aligned_cell_range(order, level, cx, cy))
            return
        for dx in (0, 1):
            for dy in (0, 1):
                visit(level + 1, cx * 2 + dx, cy * 2 + dy)

    visit(0, 0, 0)
    return out
