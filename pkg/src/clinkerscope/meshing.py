"""Conforming Delaunay triangulation of phase maps with quality refinement.

The triangulation engine is incremental Bowyer-Watson over a ghost-triangle
hull, with orientation and in-circle predicates evaluated in exact integer
arithmetic: every coordinate is snapped to a fixed 2**-20 pixel grid and kept
as a Python int from then on, so the cavity is decided without rounding and
reruns are bit-identical.

On top of that sits segment-driven refinement: constraint segments whose
closed diametral disk holds another vertex are split (at the midpoint, or on
a power-of-two shell around sharp input corners so facing splits settle at
equal radii), then triangles whose smallest angle is below the target are
attacked at their circumcenter, deferring to segment splits whenever the
circumcenter would encroach. Segments refuse to split below a small length
floor, which bounds the cascade around sharp corners.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import ParticleInstance
from .errors import DataError, IterationCapError
from .polygons import polygon_to_mask, Polygon
from .raster import LabelMap, PhaseLabel

GRID_BITS = 20
SCALE = 1 << GRID_BITS
GHOST = -1

#: Segments shorter than twice this (in pixels) are never split further.
MIN_SUBSEG = 1.0 / 64.0

#: Corners whose incident constraints meet below this angle get shell splits.
SHELL_ANGLE_DEG = 60.0


def _snap(x: float, y: float) -> tuple[int, int]:
    return (int(round(x * SCALE)), int(round(y * SCALE)))


def _orient(a: tuple[int, int], b: tuple[int, int], c: tuple[int, int]) -> int:
    d = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return (d > 0) - (d < 0)


def _in_circle(
    a: tuple[int, int], b: tuple[int, int], c: tuple[int, int], d: tuple[int, int]
) -> int:
    """Sign of the in-circle determinant: positive when d is strictly inside
    the circumcircle of the counterclockwise triangle (a, b, c)."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    det = (
        ad * (bdx * cdy - bdy * cdx)
        - bd * (adx * cdy - ady * cdx)
        + cd * (adx * bdy - ady * bdx)
    )
    return (det > 0) - (det < 0)


class _Triangulation:
    """Incremental Delaunay over exact integer coordinates.

    Triangles are stored as vertex triples keyed by a serial id; the hull is
    closed by ghost triangles carrying the GHOST marker as their third
    vertex. A directed-edge map gives O(1) adjacency.
    """

    def __init__(self, max_insertions: int = 10**6):
        self.coords: list[tuple[int, int]] = []
        self.vid_of: dict[tuple[int, int], int] = {}
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.edge: dict[tuple[int, int], int] = {}
        self.next_tid = 0
        self.hint = -1
        self.insertions = 0
        self.max_insertions = max_insertions

    # -- vertex bookkeeping ------------------------------------------------

    def add_coord(self, pt: tuple[int, int]) -> int:
        if pt in self.vid_of:
            raise DataError(
                f"duplicate node at ({pt[0] / SCALE}, {pt[1] / SCALE}) after snapping"
            )
        self.coords.append(pt)
        vid = len(self.coords) - 1
        self.vid_of[pt] = vid
        return vid

    def _pt(self, v: int) -> tuple[int, int]:
        return self.coords[v]

    # -- triangle bookkeeping ----------------------------------------------

    def _add_tri(self, a: int, b: int, c: int) -> int:
        if GHOST in (a, b, c):
            while c != GHOST:  # rotate the marker into the last slot
                a, b, c = b, c, a
        tid = self.next_tid
        self.next_tid += 1
        self.tris[tid] = (a, b, c)
        for u, v in ((a, b), (b, c), (c, a)):
            self.edge[(u, v)] = tid
        return tid

    def _drop_tri(self, tid: int) -> None:
        a, b, c = self.tris.pop(tid)
        for u, v in ((a, b), (b, c), (c, a)):
            if self.edge.get((u, v)) == tid:
                del self.edge[(u, v)]

    def real_triangles(self) -> list[tuple[int, tuple[int, int, int]]]:
        return [(tid, t) for tid, t in sorted(self.tris.items()) if t[2] != GHOST]

    # -- predicates on vertex ids -------------------------------------------

    def orient_v(self, a: int, b: int, c: int) -> int:
        return _orient(self._pt(a), self._pt(b), self._pt(c))

    def _in_cavity(self, tid: int, p: tuple[int, int]) -> bool:
        a, b, c = self.tris[tid]
        if c == GHOST:
            pa, pb = self._pt(a), self._pt(b)
            s = _orient(pa, pb, p)
            if s != 0:
                return s > 0
            dx, dy = pb[0] - pa[0], pb[1] - pa[1]
            t = (p[0] - pa[0]) * dx + (p[1] - pa[1]) * dy
            return 0 < t < dx * dx + dy * dy
        return _in_circle(self._pt(a), self._pt(b), self._pt(c), p) > 0

    # -- construction --------------------------------------------------------

    def bootstrap(self) -> None:
        """Build the first triangle (plus ghosts) from the stored coords."""
        n = len(self.coords)
        if n < 3:
            raise DataError(f"need at least 3 nodes, got {n}")
        a = 0
        b = next((i for i in range(1, n) if self.coords[i] != self.coords[a]), -1)
        if b < 0:
            raise DataError("all nodes coincide")
        c = next(
            (i for i in range(1, n) if _orient(self.coords[a], self.coords[b], self.coords[i])),
            -1,
        )
        if c < 0:
            raise DataError("all nodes are collinear; no triangulation exists")
        if _orient(self.coords[a], self.coords[b], self.coords[c]) < 0:
            a, b = b, a
        self._add_tri(a, b, c)
        self._add_tri(b, a, GHOST)
        self._add_tri(c, b, GHOST)
        self._add_tri(a, c, GHOST)
        self.hint = 0
        for i in range(1, n):
            if i in (a, b, c):
                continue
            self.insert(i)

    def _locate(self, p: tuple[int, int]) -> int:
        """A triangle whose cavity test accepts p."""
        tid = self.hint
        if tid not in self.tris or self.tris[tid][2] == GHOST:
            tid = next((t for t, v in self.tris.items() if v[2] != GHOST), -1)
        steps = 0
        cap = 4 * len(self.tris) + 16
        while steps < cap:
            steps += 1
            a, b, c = self.tris[tid]
            if c == GHOST:
                return tid  # walked off the hull; the ghost is the seed
            moved = False
            for u, v in ((a, b), (b, c), (c, a)):
                if _orient(self._pt(u), self._pt(v), p) < 0:
                    tid = self.edge[(v, u)]
                    moved = True
                    break
            if not moved:
                return tid
        # the walk looped; fall back to a scan
        for tid in sorted(self.tris):
            if self._in_cavity(tid, p):
                return tid
        raise DataError("point location failed")

    def insert(self, vid: int) -> list[int]:
        """Insert an already-registered vertex; returns the new triangle ids."""
        if self.insertions >= self.max_insertions:
            pt = self._pt(vid)
            raise IterationCapError(
                f"exceeded {self.max_insertions} insertions while refining "
                f"near ({pt[0] / SCALE:.4f}, {pt[1] / SCALE:.4f})"
            )
        self.insertions += 1
        p = self._pt(vid)
        seed = self._locate(p)
        if not self._in_cavity(seed, p):
            # collinear hull corner cases land next to the right seed
            seed = next(
                (tid for tid in sorted(self.tris) if self._in_cavity(tid, p)), -1
            )
            if seed < 0:
                raise DataError("no cavity seed accepted the new point")
        cavity = {seed}
        queue = [seed]
        while queue:
            tid = queue.pop()
            a, b, c = self.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self.edge.get((v, u))
                if nb is None or nb in cavity:
                    continue
                if self._in_cavity(nb, p):
                    cavity.add(nb)
                    queue.append(nb)
        boundary: list[tuple[int, int]] = []
        for tid in cavity:
            a, b, c = self.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                if self.edge.get((v, u)) not in cavity:
                    boundary.append((u, v))
        for tid in cavity:
            self._drop_tri(tid)
        fresh: list[int] = []
        for u, v in boundary:
            if GHOST in (u, v):
                fresh.append(self._add_tri(u, v, vid))
                continue
            if _orient(self._pt(u), self._pt(v), p) <= 0:
                raise DataError("cavity boundary is not star-shaped")
            fresh.append(self._add_tri(u, v, vid))
        for tid in fresh:
            if self.tris[tid][2] != GHOST:
                self.hint = tid
                break
        self._restore_delaunay(vid, fresh)
        return [t for t in fresh if t in self.tris]

    def _restore_delaunay(self, vid: int, fresh: list[int]) -> None:
        """Flip away any in-circle violations left by snapped off-line points."""
        stack: list[tuple[int, int]] = []
        for tid in fresh:
            a, b, c = self.tris[tid]
            if GHOST in (a, b, c):
                continue
            for u, v in ((a, b), (b, c), (c, a)):
                if vid not in (u, v):
                    stack.append((u, v))
        while stack:
            u, v = stack.pop()
            t1 = self.edge.get((u, v))
            t2 = self.edge.get((v, u))
            if t1 is None or t2 is None:
                continue
            tri1, tri2 = self.tris[t1], self.tris[t2]
            if GHOST in tri1 or GHOST in tri2:
                continue
            c1 = next(x for x in tri1 if x not in (u, v))
            c2 = next(x for x in tri2 if x not in (u, v))
            if vid not in (c1, c2):
                continue
            if _in_circle(self._pt(u), self._pt(v), self._pt(c1), self._pt(c2)) <= 0:
                continue
            self._drop_tri(t1)
            self._drop_tri(t2)
            fresh.append(self._add_tri(c1, u, c2))
            fresh.append(self._add_tri(c2, v, c1))
            stack.extend([(u, c2), (c2, v)])

    # -- queries -------------------------------------------------------------

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self.edge or (v, u) in self.edge

    def edge_apexes(self, u: int, v: int) -> list[int]:
        out = []
        for key in ((u, v), (v, u)):
            tid = self.edge.get(key)
            if tid is not None:
                w = next(x for x in self.tris[tid] if x not in (u, v))
                if w != GHOST:
                    out.append(w)
        return out


# -- geometry helpers on pixel floats ----------------------------------------


def _min_angle_deg(pa, pb, pc) -> float:
    out = 180.0
    pts = (pa, pb, pc)
    for i in range(3):
        o, p, q = pts[i], pts[(i + 1) % 3], pts[(i + 2) % 3]
        ux, uy = p[0] - o[0], p[1] - o[1]
        vx, vy = q[0] - o[0], q[1] - o[1]
        nu = np.hypot(ux, uy)
        nv = np.hypot(vx, vy)
        if nu == 0.0 or nv == 0.0:
            return 0.0
        c = np.clip((ux * vx + uy * vy) / (nu * nv), -1.0, 1.0)
        out = min(out, float(np.degrees(np.arccos(c))))
    return out


def _circumcenter(pa, pb, pc):
    ax, ay = pa
    bx, by = pb
    cx, cy = pc
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return None
    a2 = ax * ax + ay * ay
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    return (ux, uy)


@dataclass(eq=False)
class TriMesh:
    """A labelled triangle mesh in pixel coordinates.

    ``segments`` holds the constraint subsegments present as mesh edges, and
    ``chains`` the vertex chain each input constraint was subdivided into.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    labels: np.ndarray
    segments: list[tuple[int, int]] = field(default_factory=list)
    chains: list[list[int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if self.labels.shape[0] != self.triangles.shape[0]:
            raise DataError("one label per triangle required")
        n = self.nodes.shape[0]
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= n
        ):
            raise DataError("triangle references a node that does not exist")
        for u, v in self.segments:
            if not (0 <= u < n and 0 <= v < n):
                raise DataError("segment references a node that does not exist")

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * np.abs(
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        )

    def min_angles(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return np.array(
            [_min_angle_deg(tuple(t[0]), tuple(t[1]), tuple(t[2])) for t in p]
        )


def _build_mesh(T: _Triangulation, segments=None, chains=None) -> TriMesh:
    nodes = np.array(T.coords, dtype=np.float64) / SCALE
    tris = np.array([t for _, t in T.real_triangles()], dtype=np.int32).reshape(-1, 3)
    return TriMesh(
        nodes=nodes,
        triangles=tris,
        labels=np.zeros(tris.shape[0], dtype=np.uint8),
        segments=sorted(segments) if segments else [],
        chains=[list(c) for c in chains] if chains else [],
    )


def delaunay_triangulation(points, max_insertions: int = 10**6) -> TriMesh:
    """Plain Delaunay triangulation of a point set (no constraints).

    Coordinates are snapped to the 2**-20 pixel grid first; points that
    collide after snapping are an error.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    T = _Triangulation(max_insertions=max_insertions)
    for x, y in pts.tolist():
        T.add_coord(_snap(x, y))
    T.bootstrap()
    return _build_mesh(T)


class _Refiner:
    """Segment conformity and minimum-angle refinement over a triangulation."""

    def __init__(
        self,
        T: _Triangulation,
        segments: list[tuple[int, int]],
        min_angle: float,
    ):
        self.T = T
        self.min_angle = min_angle
        self.n_input = len(T.coords)
        self.segs: set[tuple[int, int]] = set()
        self.chain_idx: dict[tuple[int, int], int] = {}
        self.chains: list[list[int]] = []
        self.no_split: set[tuple[int, int]] = set()
        self.accepted: set[tuple[int, int, int]] = set()
        self.seg_queue: list[tuple[int, int]] = []
        for u, v in segments:
            key = self._key(u, v)
            self.segs.add(key)
            self.chain_idx[key] = len(self.chains)
            self.chains.append([u, v])
        self.acute: set[int] = self._find_acute_corners(segments)

    @staticmethod
    def _key(u: int, v: int) -> tuple[int, int]:
        return (u, v) if u < v else (v, u)

    def _find_acute_corners(self, segments) -> set[int]:
        nbrs: dict[int, list[int]] = {}
        for u, v in segments:
            nbrs.setdefault(u, []).append(v)
            nbrs.setdefault(v, []).append(u)
        acute: set[int] = set()
        thr = np.cos(np.radians(SHELL_ANGLE_DEG))
        for vid, around in nbrs.items():
            if len(around) < 2:
                continue
            o = self.T.coords[vid]
            dirs = []
            for w in around:
                p = self.T.coords[w]
                d = np.array([p[0] - o[0], p[1] - o[1]], dtype=np.float64)
                norm = np.hypot(*d)
                if norm > 0:
                    dirs.append(d / norm)
            for i in range(len(dirs)):
                for j in range(i + 1, len(dirs)):
                    if float(dirs[i] @ dirs[j]) > thr:
                        acute.add(vid)
        return acute

    # -- encroachment --------------------------------------------------------

    def _in_diametral(self, key: tuple[int, int], p: tuple[int, int]) -> bool:
        u, v = key
        pu, pv = self.T.coords[u], self.T.coords[v]
        if p == pu or p == pv:
            return False
        dx = pu[0] + pv[0] - 2 * p[0]
        dy = pu[1] + pv[1] - 2 * p[1]
        ex = pu[0] - pv[0]
        ey = pu[1] - pv[1]
        return dx * dx + dy * dy <= ex * ex + ey * ey

    def _encroached(self, key: tuple[int, int]) -> bool:
        u, v = key
        if not self.T.has_edge(u, v):
            return True
        return any(
            self._in_diametral(key, self.T.coords[w]) for w in self.T.edge_apexes(u, v)
        )

    # -- splitting -----------------------------------------------------------

    def _length_px(self, key: tuple[int, int]) -> float:
        pu, pv = self.T.coords[key[0]], self.T.coords[key[1]]
        return float(np.hypot(pu[0] - pv[0], pu[1] - pv[1])) / SCALE

    def _split_point(self, key: tuple[int, int]) -> tuple[int, int] | None:
        u, v = key
        pu, pv = self.T.coords[u], self.T.coords[v]
        L = self._length_px(key)
        if L < 2 * MIN_SUBSEG:
            return None
        au = u < self.n_input and u in self.acute
        av = v < self.n_input and v in self.acute
        if au != av:
            # power-of-two shell around the sharp corner so facing splits
            # settle at matching radii and stop encroaching each other
            c, o = (u, v) if au else (v, u)
            pc, po = self.T.coords[c], self.T.coords[o]
            shell = 2.0 ** round(np.log2(L / 2.0))
            t = shell / L
            p = (
                int(round(pc[0] + t * (po[0] - pc[0]))),
                int(round(pc[1] + t * (po[1] - pc[1]))),
            )
        else:
            p = ((pu[0] + pv[0]) // 2, (pu[1] + pv[1]) // 2)
        if p == pu or p == pv:
            return None
        return p

    def _split_seg(self, key: tuple[int, int]) -> int | None:
        p = self._split_point(key)
        if p is None:
            self.no_split.add(key)
            return None
        u, v = key
        reused = self.T.vid_of.get(p)
        mid = reused if reused is not None else self.T.add_coord(p)
        ci = self.chain_idx.pop(key)
        self.segs.discard(key)
        k1, k2 = self._key(u, mid), self._key(mid, v)
        self.segs.update((k1, k2))
        self.chain_idx[k1] = ci
        self.chain_idx[k2] = ci
        chain = self.chains[ci]
        for i in range(len(chain) - 1):
            if {chain[i], chain[i + 1]} == {u, v}:
                chain.insert(i + 1, mid)
                break
        else:
            raise DataError("segment chain lost track of a subsegment")
        if reused is None:
            created = self.T.insert(mid)
            self._after_insert(created)
        self.seg_queue.extend((k1, k2))
        return mid

    def _after_insert(self, created: list[int]) -> None:
        for tid in created:
            t = self.T.tris.get(tid)
            if t is None or t[2] == GHOST:
                continue
            a, b, c = t
            for e in (self._key(a, b), self._key(b, c), self._key(c, a)):
                if e in self.segs:
                    self.seg_queue.append(e)

    def drain_segments(self) -> None:
        while self.seg_queue:
            key = self.seg_queue.pop()
            if key not in self.segs or key in self.no_split:
                continue
            if self._encroached(key):
                self._split_seg(key)

    # -- quality -------------------------------------------------------------

    def _tri_points(self, verts: tuple[int, int, int]):
        return [
            (self.T.coords[v][0] / SCALE, self.T.coords[v][1] / SCALE) for v in verts
        ]

    def _skinny(self, verts: tuple[int, int, int]) -> bool:
        pa, pb, pc = self._tri_points(verts)
        return _min_angle_deg(pa, pb, pc) < self.min_angle

    def refine(self) -> None:
        # recover missing constraint edges and split anything a current
        # vertex already encroaches; quality work assumes this holds
        self.seg_queue.extend(sorted(self.segs))
        self.drain_segments()
        if self.min_angle <= 0.0:
            self._final_check()
            return
        # rescan between queue passes: segment splits spoil triangles that
        # never went through the queue, so one pass is not enough
        while True:
            queue: deque[tuple[int, tuple[int, int, int]]] = deque(
                (tid, t)
                for tid, t in self.T.real_triangles()
                if t not in self.accepted and self._skinny(t)
            )
            if not queue:
                break
            moved = False
            while queue:
                tid, verts = queue.popleft()
                if self.T.tris.get(tid) != verts or verts in self.accepted:
                    continue
                if not self._skinny(verts):
                    continue
                center = _circumcenter(*self._tri_points(verts))
                if center is None:
                    self.accepted.add(verts)
                    continue
                p = _snap(*center)
                if p in self.T.vid_of:
                    self.accepted.add(verts)
                    continue
                enc = self._center_encroaches(p)
                if enc:
                    splittable = [
                        k
                        for k in enc
                        if k not in self.no_split and self._split_point(k) is not None
                    ]
                    if not splittable:
                        self.accepted.add(verts)
                        continue
                    # split the offended segments even though the center
                    # itself never goes in, then give the triangle another go
                    for k in splittable:
                        if k in self.segs:
                            self._split_seg(k)
                    self.drain_segments()
                    moved = True
                    if self.T.tris.get(tid) == verts:
                        queue.append((tid, verts))
                elif self._outside_hull(p):
                    # an unconstrained hull edge faces the center; backing
                    # off beats growing the mesh past its own boundary
                    self.accepted.add(verts)
                else:
                    vid = self.T.add_coord(p)
                    created = self.T.insert(vid)
                    self._after_insert(created)
                    self.drain_segments()
                    moved = True
                    for ntid in created:
                        t = self.T.tris.get(ntid)
                        if t is not None and t[2] != GHOST and self._skinny(t):
                            queue.append((ntid, t))
            if not moved:
                break
        self._final_check()

    def _outside_hull(self, p: tuple[int, int]) -> bool:
        try:
            seed = self.T._locate(p)
        except DataError:
            return True
        return self.T.tris[seed][2] == GHOST

    def _center_encroaches(self, p: tuple[int, int]) -> list[tuple[int, int]]:
        """Subsegments whose closed diametral disk would swallow point p."""
        try:
            seed = self.T._locate(p)
        except DataError:
            return []
        if not self.T._in_cavity(seed, p):
            seed = next(
                (tid for tid in sorted(self.T.tris) if self.T._in_cavity(tid, p)), -1
            )
            if seed < 0:
                return []
        cavity = {seed}
        stack = [seed]
        while stack:
            tid = stack.pop()
            a, b, c = self.T.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self.T.edge.get((v, u))
                if nb is not None and nb not in cavity and self.T._in_cavity(nb, p):
                    cavity.add(nb)
                    stack.append(nb)
        out: set[tuple[int, int]] = set()
        for tid in cavity:
            a, b, c = self.T.tris[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                if GHOST in (u, v):
                    continue
                key = self._key(u, v)
                if key in self.segs and self._in_diametral(key, p):
                    out.add(key)
        return sorted(out)

    def _final_check(self) -> None:
        # conformity must hold even for segments we refused to split
        for key in sorted(self.segs):
            if not self.T.has_edge(*key):
                raise IterationCapError(
                    f"segment {key} could not be recovered within the length floor"
                )


def conforming_delaunay(
    nodes,
    segments: list[tuple[int, int]] | None = None,
    min_angle: float = 20.0,
    max_insertions: int = 10**6,
) -> TriMesh:
    """Delaunay triangulation containing every constraint segment as edges,
    refined until triangle angles reach ``min_angle`` degrees.

    Constraints may share endpoints but must not cross or overlap. Sharp
    input corners keep their short triangles: refinement backs off rather
    than splitting forever. Raises when the insertion budget runs out.
    """
    pts = np.asarray(nodes, dtype=np.float64).reshape(-1, 2)
    segments = [(int(u), int(v)) for u, v in (segments or [])]
    if not (0.0 <= min_angle <= 34.0):
        raise DataError(f"min angle must be in [0, 34] degrees, got {min_angle}")
    T = _Triangulation(max_insertions=max_insertions)
    for x, y in pts.tolist():
        T.add_coord(_snap(x, y))
    n = len(T.coords)
    seen: set[tuple[int, int]] = set()
    for u, v in segments:
        if not (0 <= u < n and 0 <= v < n):
            raise DataError(f"segment ({u}, {v}) references a missing node")
        if u == v:
            raise DataError(f"segment ({u}, {v}) is degenerate")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise DataError(f"segment ({u}, {v}) appears twice")
        seen.add(key)
    _check_crossings(T.coords, sorted(seen))
    T.bootstrap()
    refiner = _Refiner(T, sorted(seen), min_angle)
    refiner.refine()
    return _build_mesh(T, refiner.segs, refiner.chains)


def _check_crossings(coords, segments) -> None:
    if not segments:
        return
    a = np.array([coords[u] for u, _ in segments], dtype=np.float64)
    b = np.array([coords[v] for _, v in segments], dtype=np.float64)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    m = len(segments)
    for i in range(m):
        overlap = np.flatnonzero(
            (lo[i + 1 :, 0] <= hi[i, 0])
            & (hi[i + 1 :, 0] >= lo[i, 0])
            & (lo[i + 1 :, 1] <= hi[i, 1])
            & (hi[i + 1 :, 1] >= lo[i, 1])
        )
        u1, v1 = segments[i]
        p1, p2 = coords[u1], coords[v1]
        for off in overlap.tolist():
            j = i + 1 + off
            u2, v2 = segments[j]
            if {u1, v1} & {u2, v2}:
                continue
            q1, q2 = coords[u2], coords[v2]
            d1 = _orient(p1, p2, q1)
            d2 = _orient(p1, p2, q2)
            d3 = _orient(q1, q2, p1)
            d4 = _orient(q1, q2, p2)
            crossing = d1 * d2 < 0 and d3 * d4 < 0
            touching = (
                (d1 == 0 and _between(p1, p2, q1))
                or (d2 == 0 and _between(p1, p2, q2))
                or (d3 == 0 and _between(q1, q2, p1))
                or (d4 == 0 and _between(q1, q2, p2))
            )
            if crossing or touching:
                raise DataError(
                    f"constraint segments {segments[i]} and {segments[j]} intersect"
                )


def _between(a, b, p) -> bool:
    dx, dy = b[0] - a[0], b[1] - a[1]
    t = (p[0] - a[0]) * dx + (p[1] - a[1]) * dy
    return 0 < t < dx * dx + dy * dy


# -- boundary sampling ---------------------------------------------------------


def _resample_ring(vertices: np.ndarray, spacing: float) -> np.ndarray:
    """Points spaced evenly by arc length along a closed polygon ring."""
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.diff(closed, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    total = float(lengths.sum())
    if total == 0.0:
        return vertices[:1]
    m = max(3, int(round(total / spacing)))
    targets = np.arange(m) * (total / m)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(lengths) - 1)
    local = targets - cum[idx]
    frac = np.where(lengths[idx] > 0, local / np.where(lengths[idx] > 0, lengths[idx], 1.0), 0.0)
    return closed[idx] + seg[idx] * frac[:, None]


def boundary_nodes(
    instances: list[ParticleInstance],
    width: int,
    height: int,
    spacing: float = 4.0,
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Mesh input from particle outlines plus the image frame.

    Every particle boundary ring is resampled at roughly ``spacing`` pixels
    between points, the frame is subdivided at the same spacing, and all
    points are deduplicated on the snapping grid. Returns the node array and
    the constraint segments (as node index pairs).

    Chords of touching outlines can cross at coarse spacings; when that
    happens the whole sampling is redone at half the spacing, bottoming out
    at 1 where every constraint is a unit step on the pixel cracks and
    crossings cannot occur.
    """
    if spacing <= 0:
        raise DataError(f"spacing must be positive, got {spacing}")
    if width < 1 or height < 1:
        raise DataError(f"bad frame {width}x{height}")
    s = float(spacing)
    while True:
        nodes, segments = _boundary_sample(instances, width, height, s)
        try:
            _check_crossings([_snap(x, y) for x, y in nodes.tolist()], segments)
        except DataError:
            if s <= 1.0:
                raise
            s = max(1.0, s / 2.0)
            continue
        return nodes, segments


def _boundary_sample(
    instances: list[ParticleInstance],
    width: int,
    height: int,
    spacing: float,
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    nodes: list[tuple[float, float]] = []
    by_key: dict[tuple[int, int], int] = {}
    segments: list[tuple[int, int]] = []
    seg_seen: set[tuple[int, int]] = set()

    def node_id(x: float, y: float) -> int:
        key = _snap(x, y)
        vid = by_key.get(key)
        if vid is None:
            vid = len(nodes)
            by_key[key] = vid
            nodes.append((x, y))
        return vid

    def add_seg(a: int, b: int) -> None:
        if a == b:
            return
        key = (a, b) if a < b else (b, a)
        if key not in seg_seen:
            seg_seen.add(key)
            segments.append(key)

    corners = [(0.0, 0.0), (float(width), 0.0), (float(width), float(height)), (0.0, float(height))]
    for ci in range(4):
        x0, y0 = corners[ci]
        x1, y1 = corners[(ci + 1) % 4]
        side = float(np.hypot(x1 - x0, y1 - y0))
        k = max(1, int(round(side / spacing)))
        ids = [
            node_id(x0 + (x1 - x0) * j / k, y0 + (y1 - y0) * j / k) for j in range(k)
        ]
        ids.append(node_id(x1, y1))
        for a, b in zip(ids, ids[1:]):
            add_seg(a, b)

    for inst in sorted(instances, key=lambda i: i.id):
        for poly in inst.polygons:
            ring = _resample_ring(poly.vertices.astype(np.float64), spacing)
            ids = []
            for x, y in ring.tolist():
                vid = node_id(x, y)
                if not ids or ids[-1] != vid:
                    ids.append(vid)
            if len(ids) >= 2 and ids[0] == ids[-1]:
                ids.pop()
            if len(ids) < 3:
                continue
            for a, b in zip(ids, ids[1:] + ids[:1]):
                add_seg(a, b)

    return np.array(nodes, dtype=np.float64).reshape(-1, 2), segments


# -- labelling and measurement -------------------------------------------------


def label_triangles(mesh: TriMesh, labels: LabelMap, rule: str = "centroid") -> TriMesh:
    """Assign each triangle the phase of the label map under it.

    ``centroid`` reads the pixel containing the triangle centroid;
    ``majority`` rasterizes each triangle and takes the most frequent phase,
    falling back to the centroid pixel when no pixel center is covered.
    """
    if rule not in ("centroid", "majority"):
        raise DataError(f"unknown labelling rule {rule!r}")
    h, w = labels.height, labels.width
    pts = mesh.nodes[mesh.triangles]
    cent = pts.mean(axis=1)
    cx = np.clip(np.floor(cent[:, 0]).astype(np.int64), 0, w - 1)
    cy = np.clip(np.floor(cent[:, 1]).astype(np.int64), 0, h - 1)
    out = labels.labels[cy, cx].copy()
    if rule == "majority":
        for t in range(mesh.n_triangles):
            tri = pts[t]
            try:
                poly = Polygon(tri)
            except DataError:
                continue
            mask = polygon_to_mask([poly], height=h, width=w)
            if mask.bits.any():
                counts = np.bincount(labels.labels[mask.bits], minlength=3)
                best = int(counts.argmax())
                if counts[best] > 0 and (counts == counts[best]).sum() == 1:
                    out[t] = best
    result = TriMesh(
        nodes=mesh.nodes.copy(),
        triangles=mesh.triangles.copy(),
        labels=out.astype(np.uint8),
        segments=list(mesh.segments),
        chains=[list(c) for c in mesh.chains],
    )
    return result


def phase_area_fractions(mesh: TriMesh) -> dict[PhaseLabel, float]:
    """Fraction of total mesh area covered by each phase label."""
    areas = mesh.triangle_areas()
    total = float(areas.sum())
    out: dict[PhaseLabel, float] = {}
    for phase in PhaseLabel:
        covered = float(areas[mesh.labels == int(phase)].sum())
        out[phase] = covered / total if total > 0 else 0.0
    return out


# -- file formats ----------------------------------------------------------------


def export_node_ele(mesh: TriMesh, base: str | Path) -> tuple[Path, Path]:
    """Write Triangle-style .node and .ele files (1-based indices)."""
    if mesh.n_triangles == 0:
        raise DataError("refusing to write an empty mesh")
    base = Path(base)
    node_path = base.with_suffix(".node")
    ele_path = base.with_suffix(".ele")
    lines = [f"{mesh.nodes.shape[0]} 2 0 0"]
    for i, (x, y) in enumerate(mesh.nodes.tolist(), start=1):
        lines.append(f"{i} {x!r} {y!r}")
    node_path.write_text("\n".join(lines) + "\n")
    lines = [f"{mesh.n_triangles} 3 1"]
    for i, (t, lab) in enumerate(
        zip(mesh.triangles.tolist(), mesh.labels.tolist()), start=1
    ):
        lines.append(f"{i} {t[0] + 1} {t[1] + 1} {t[2] + 1} {lab}")
    ele_path.write_text("\n".join(lines) + "\n")
    return node_path, ele_path


def export_mesh_json(mesh: TriMesh, path: str | Path) -> Path:
    payload = {
        "nodes": mesh.nodes.tolist(),
        "triangles": mesh.triangles.tolist(),
        "labels": mesh.labels.tolist(),
        "segments": [list(s) for s in mesh.segments],
        "chains": [list(c) for c in mesh.chains],
    }
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def load_mesh_json(path: str | Path) -> TriMesh:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    for field_name in ("nodes", "triangles", "labels"):
        if field_name not in payload:
            raise DataError(f"{path} is missing the {field_name!r} array")
    return TriMesh(
        nodes=np.array(payload["nodes"], dtype=np.float64).reshape(-1, 2),
        triangles=np.array(payload["triangles"], dtype=np.int32).reshape(-1, 3),
        labels=np.array(payload["labels"], dtype=np.uint8),
        segments=[tuple(s) for s in payload.get("segments", [])],
        chains=[list(c) for c in payload.get("chains", [])],
    )
