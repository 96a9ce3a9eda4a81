"""Boundary tracing on the pixel corner grid and even-odd polygon rasterization.

Polygons live in pixel coordinates: the vertex ``(x, y)`` is the top-left
corner of pixel ``(x, y)``. With image y pointing down, outer boundaries come
out of the tracer with positive signed area and holes with negative signed
area.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .raster import BinaryMask

# direction codes: east, south, west, north
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(eq=False)
class Polygon:
    """A closed polygon given by its vertex ring (not repeated at the end).

    Vertices are ``(x, y)`` pairs. Self-touching rings (shared corners) are
    allowed; self-crossing rings are not expected and not checked.
    """

    vertices: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DataError(f"polygon vertices must be (n, 2), got shape {v.shape}")
        if v.shape[0] < 3:
            raise DataError(f"polygon needs at least 3 vertices, got {v.shape[0]}")
        if np.any(np.all(v == np.roll(v, -1, axis=0), axis=1)):
            raise DataError("polygon has repeated consecutive vertices")
        self.vertices = v
        if self.signed_area == 0.0:
            raise DataError("polygon is degenerate (zero area)")

    @property
    def signed_area(self) -> float:
        """Shoelace area; positive for outer rings, negative for holes."""
        x = self.vertices[:, 0]
        y = self.vertices[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def is_hole(self) -> bool:
        return self.signed_area < 0


def mask_to_polygons(mask: BinaryMask) -> list[Polygon]:
    """Trace the boundaries of a mask into closed polygons.

    Walks the cracks between foreground and background pixels. At corners
    where two diagonal foreground pixels touch, the walk turns left, which
    keeps diagonally connected regions in a single outer ring (8-connected
    foreground). Hole rings come out with negative area. Collinear corners
    are merged away.
    """
    m = mask.bits
    if not m.any():
        return []
    h, w = m.shape
    f = np.zeros((h + 2, w + 2), dtype=bool)
    f[1:-1, 1:-1] = m

    # outgoing crack edges keyed by start corner, one slot per direction
    out: dict[tuple[int, int], dict[int, tuple[int, int]]] = {}

    def add(x0: int, y0: int, d: int, x1: int, y1: int) -> None:
        out.setdefault((x0, y0), {})[d] = (x1, y1)

    ys, xs = np.nonzero(m & ~f[:-2, 1:-1])  # exposed top sides
    for x, y in zip(xs.tolist(), ys.tolist()):
        add(x, y, 0, x + 1, y)
    ys, xs = np.nonzero(m & ~f[1:-1, 2:])  # exposed right sides
    for x, y in zip(xs.tolist(), ys.tolist()):
        add(x + 1, y, 1, x + 1, y + 1)
    ys, xs = np.nonzero(m & ~f[2:, 1:-1])  # exposed bottom sides
    for x, y in zip(xs.tolist(), ys.tolist()):
        add(x + 1, y + 1, 2, x, y + 1)
    ys, xs = np.nonzero(m & ~f[1:-1, :-2])  # exposed left sides
    for x, y in zip(xs.tolist(), ys.tolist()):
        add(x, y + 1, 3, x, y)

    # each directed edge has exactly one successor, so the edge set splits
    # into closed walks; trace each one starting from its smallest corner
    polygons: list[Polygon] = []
    used: set[tuple[tuple[int, int], int]] = set()
    for start in sorted(out.keys(), key=lambda c: (c[1], c[0])):
        for d0 in sorted(out[start]):
            if (start, d0) in used:
                continue
            ring: list[tuple[int, int]] = []
            edge = (start, d0)
            while edge not in used:
                used.add(edge)
                corner, d = edge
                ring.append(corner)
                nxt = out[corner][d]
                slots = out.get(nxt)
                if not slots:
                    raise DataError("boundary walk fell off the crack grid")
                if len(slots) == 1:
                    nd = next(iter(slots))
                else:
                    # pinch corner: turn left relative to the incoming direction
                    dx, dy = _DIRS[d]
                    nd = _DIRS.index((dy, -dx))
                    if nd not in slots:
                        raise DataError("boundary walk hit an inconsistent corner")
                edge = (nxt, nd)
            polygons.append(Polygon(_merge_collinear(ring)))
    return polygons


def _merge_collinear(ring: list[tuple[int, int]]) -> np.ndarray:
    v = np.array(ring, dtype=np.float64)
    d = np.roll(v, -1, axis=0) - v
    # drop a vertex when the incoming and outgoing steps point the same way
    keep = np.any(np.sign(d) != np.sign(np.roll(d, 1, axis=0)), axis=1)
    return v[keep]


def polygon_to_mask(polygons: list[Polygon] | Polygon, width: int, height: int) -> BinaryMask:
    """Rasterize polygons to the pixels whose centers they cover (even-odd rule).

    A pixel is set when a horizontal ray from its center ``(i + 0.5, j + 0.5)``
    to the left crosses the combined edge set an odd number of times. Each
    edge spans the half-open row interval ``[min(y), max(y))`` so shared
    vertices count once; horizontal edges never cross.
    """
    if isinstance(polygons, Polygon):
        polygons = [polygons]
    if width < 1 or height < 1:
        raise DataError(f"target grid must be positive, got {width}x{height}")
    rows: list[np.ndarray] = []
    cross: list[np.ndarray] = []
    for poly in polygons:
        if abs(poly.signed_area) == 0.0:
            raise DataError("cannot rasterize a degenerate polygon")
        v = poly.vertices
        a = v
        b = np.roll(v, -1, axis=0)
        for (x1, y1), (x2, y2) in zip(a.tolist(), b.tolist()):
            if y1 == y2:
                continue
            ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
            j0 = max(0, int(np.ceil(ylo - 0.5)))
            j1 = min(height - 1, int(np.ceil(yhi - 0.5)) - 1)
            if j1 < j0:
                continue
            j = np.arange(j0, j1 + 1)
            yc = j + 0.5
            xc = x1 + (yc - y1) * (x2 - x1) / (y2 - y1)
            rows.append(j)
            cross.append(xc)
    bits = np.zeros((height, width), dtype=bool)
    if not rows:
        return BinaryMask(bits)
    rj = np.concatenate(rows)
    xc = np.concatenate(cross)
    order = np.lexsort((xc, rj))
    rj, xc = rj[order], xc[order]
    centers = np.arange(width) + 0.5
    bounds = np.searchsorted(rj, np.arange(height + 1))
    for j in range(height):
        lo, hi = bounds[j], bounds[j + 1]
        if lo == hi:
            continue
        # parity of crossings strictly left of each pixel center
        bits[j] = np.searchsorted(xc[lo:hi], centers, side="left") % 2 == 1
    return BinaryMask(bits)
