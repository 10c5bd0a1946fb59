"""Collision-constraint geometry: obstacle maps, safe flight corridors, buffered
Voronoi cells, and the exact distance primitives they are built on.

All distance computations are exact (closed-form feature-pair minimisation), never
sampled. Obstacles are axis-aligned boxes; an agent is a sphere of radius r, so
"inflated by r" checks reduce to `distance > r` against the box set. Clearance of
exactly r counts as a collision (closed obstacle convention).
"""

from dataclasses import dataclass, field

import numpy as np

_DEG_EPS = 1e-12  # squared-length threshold for degenerate segments/triangles


# ---------------------------------------------------------------------------
# basic containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AABox:
    """Axis-aligned box given by two corners, lo <= hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != (3,) or self.hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if np.any(self.hi < self.lo):
            raise ValueError(f"empty box: lo={self.lo}, hi={self.hi}")

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


class ObstacleMap:
    """Static obstacle set as two (K, 3) corner arrays (vectorised queries)."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_2d(np.asarray(lo, dtype=float)).reshape(-1, 3)
        self.hi = np.atleast_2d(np.asarray(hi, dtype=float)).reshape(-1, 3)
        if self.lo.shape != self.hi.shape:
            raise ValueError("obstacle corner arrays must have matching shapes")
        if np.any(self.hi <= self.lo):
            raise ValueError("obstacle boxes must have positive extent")
        self._tris = None

    @classmethod
    def empty(cls) -> "ObstacleMap":
        m = cls.__new__(cls)
        m.lo = np.zeros((0, 3))
        m.hi = np.zeros((0, 3))
        m._tris = None
        return m

    @classmethod
    def from_boxes(cls, boxes) -> "ObstacleMap":
        if not boxes:
            return cls.empty()
        lo = np.array([np.asarray(b[0], dtype=float) for b in boxes])
        hi = np.array([np.asarray(b[1], dtype=float) for b in boxes])
        return cls(lo, hi)

    def __len__(self) -> int:
        return self.lo.shape[0]

    @property
    def boxes(self) -> list[AABox]:
        return [AABox(l, h) for l, h in zip(self.lo, self.hi)]

    def face_triangles(self) -> np.ndarray:
        """(K, 12, 3, 3) triangle decomposition of every box surface (cached)."""
        if self._tris is None:
            self._tris = _box_face_triangles(self.lo, self.hi)
        return self._tris

    def to_json(self) -> list[dict]:
        return [
            {"lo_m": l.tolist(), "hi_m": h.tolist()} for l, h in zip(self.lo, self.hi)
        ]

    @classmethod
    def from_json(cls, data) -> "ObstacleMap":
        return cls.from_boxes([(d["lo_m"], d["hi_m"]) for d in data])


@dataclass(frozen=True)
class ConvexRegion:
    """Halfspace intersection; x is inside iff normals @ x - offsets >= 0 rowwise.

    kind is 'sfc' (always an axis-aligned box, 6 rows) or 'bvc' (one row per
    neighbouring agent). Normals are unit length.
    """

    normals: np.ndarray  # (m, 3)
    offsets: np.ndarray  # (m,)
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "normals", np.atleast_2d(np.asarray(self.normals, float)))
        object.__setattr__(self, "offsets", np.atleast_1d(np.asarray(self.offsets, float)))
        norms = np.linalg.norm(self.normals, axis=1)
        if self.normals.shape[0] and np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("region normals must be unit length")

    def margins(self, x) -> np.ndarray:
        """Signed slack of each halfspace at x (>= 0 means satisfied)."""
        return self.normals @ np.asarray(x, dtype=float) - self.offsets

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "normals": self.normals.tolist(),
            "offsets": self.offsets.tolist(),
        }


@dataclass(frozen=True)
class SegmentPair:
    """Closest points between two segments: c_ab on segment a, c_ba on segment b."""

    c_ab: np.ndarray
    c_ba: np.ndarray
    s: float  # parameter of c_ab on segment a
    t: float  # parameter of c_ba on segment b

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.c_ab - self.c_ba))


def region_contains(region: ConvexRegion, x, tol: float = 1e-9) -> bool:
    """True iff every halfspace margin at x is >= -tol."""
    m = region.margins(x)
    return bool(m.size == 0 or np.min(m) >= -tol)


def region_from_box(lo, hi, kind: str = "sfc") -> ConvexRegion:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    eye = np.eye(3)
    normals = np.vstack([eye, -eye])
    offsets = np.concatenate([lo, -hi])
    return ConvexRegion(normals, offsets, kind)


# ---------------------------------------------------------------------------
# distance primitives (batched over leading axes)
# ---------------------------------------------------------------------------


def dist_point_boxes(p, lo, hi) -> np.ndarray:
    """Distance from point(s) p (..., 3) to boxes (K, 3): result (..., K)."""
    p = np.asarray(p, dtype=float)
    d = np.maximum(lo - p[..., None, :], 0.0) + np.maximum(p[..., None, :] - hi, 0.0)
    return np.linalg.norm(d, axis=-1)


def dist_box_box(lo1, hi1, lo2, hi2) -> np.ndarray:
    """Distance between axis boxes, batched over broadcastable leading axes."""
    gap = np.maximum(np.asarray(lo2) - np.asarray(hi1), 0.0) + np.maximum(
        np.asarray(lo1) - np.asarray(hi2), 0.0
    )
    return np.linalg.norm(gap, axis=-1)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def seg_seg_params(a0, a1, b0, b1):
    """Closest-point parameters (s, t) between segments [a0,a1] and [b0,b1].

    Batched over leading axes. Ties (parallel/degenerate configurations) resolve
    to the smallest s, then the smallest t, among minimisers.
    """
    a0 = np.asarray(a0, float)
    a1 = np.asarray(a1, float)
    b0 = np.asarray(b0, float)
    b1 = np.asarray(b1, float)
    d1 = a1 - a0
    d2 = b1 - b0
    r = a0 - b0
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    c = _dot(d1, r)
    b = _dot(d1, d2)
    denom = a * e - b * b

    a_deg = a <= _DEG_EPS
    e_deg = e <= _DEG_EPS
    safe_a = np.where(a_deg, 1.0, a)
    safe_e = np.where(e_deg, 1.0, e)
    safe_denom = np.where(denom > _DEG_EPS, denom, 1.0)

    s = np.clip(np.where(denom > _DEG_EPS, (b * f - c * e) / safe_denom, 0.0), 0.0, 1.0)
    t = (b * s + f) / safe_e
    # clamp t, then recompute s for the clamped endpoint
    s = np.where(t < 0.0, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(t > 1.0, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    # degenerate segments
    s = np.where(a_deg, 0.0, s)
    t = np.where(a_deg, np.clip(f / safe_e, 0.0, 1.0), t)
    t = np.where(e_deg, 0.0, t)
    s = np.where(e_deg & ~a_deg, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(a_deg & e_deg, 0.0, t)
    s = np.where(a_deg & e_deg, 0.0, s)
    return s, t


def closest_segment_points(a0, a1, b0, b1) -> SegmentPair:
    """Closest points between two 3D segments (degenerate segments allowed)."""
    a0 = np.asarray(a0, float)
    a1 = np.asarray(a1, float)
    b0 = np.asarray(b0, float)
    b1 = np.asarray(b1, float)
    s, t = seg_seg_params(a0, a1, b0, b1)
    return SegmentPair(a0 + s * (a1 - a0), b0 + t * (b1 - b0), float(s), float(t))


def dist_seg_seg(a0, a1, b0, b1) -> np.ndarray:
    s, t = seg_seg_params(a0, a1, b0, b1)
    ca = a0 + s[..., None] * (np.asarray(a1, float) - a0)
    cb = b0 + t[..., None] * (np.asarray(b1, float) - b0)
    return np.linalg.norm(ca - cb, axis=-1)


def closest_pt_point_triangle(p, ta, tb, tc) -> np.ndarray:
    """Closest point on triangle (ta, tb, tc) to p; batched over leading axes."""
    p = np.asarray(p, float)
    ab = tb - ta
    ac = tc - ta
    ap = p - ta
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    bp = p - tb
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    cp = p - tc
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    denom = va + vb + vc
    safe = np.where(np.abs(denom) > _DEG_EPS, denom, 1.0)
    v = vb / safe
    w = vc / safe
    out = ta + v[..., None] * ab + w[..., None] * ac

    # edge BC region
    d43 = d4 - d3
    d56 = d5 - d6
    wbc = d43 / np.where(np.abs(d43 + d56) > _DEG_EPS, d43 + d56, 1.0)
    on_bc = (va <= 0) & (d43 >= 0) & (d56 >= 0)
    out = np.where(on_bc[..., None], tb + np.clip(wbc, 0, 1)[..., None] * (tc - tb), out)
    # edge AC region
    wac = d2 / np.where(np.abs(d2 - d6) > _DEG_EPS, d2 - d6, 1.0)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out = np.where(on_ac[..., None], ta + np.clip(wac, 0, 1)[..., None] * ac, out)
    # edge AB region
    wab = d1 / np.where(np.abs(d1 - d3) > _DEG_EPS, d1 - d3, 1.0)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out = np.where(on_ab[..., None], ta + np.clip(wab, 0, 1)[..., None] * ab, out)
    # vertex regions
    out = np.where(((d6 >= 0) & (d5 <= d6))[..., None], tc, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[..., None], tb, out)
    out = np.where(((d1 <= 0) & (d2 <= 0))[..., None], ta, out)
    return out


def dist_point_triangle(p, ta, tb, tc) -> np.ndarray:
    q = closest_pt_point_triangle(p, ta, tb, tc)
    return np.linalg.norm(np.asarray(p, float) - q, axis=-1)


def _box_face_triangles(lo, hi) -> np.ndarray:
    """(K, 12, 3, 3) triangles covering each box surface."""
    lo = np.atleast_2d(lo)
    hi = np.atleast_2d(hi)
    k = lo.shape[0]
    # 8 corners, bit i of the index selects hi on axis i
    corners = np.empty((k, 8, 3))
    for idx in range(8):
        sel = np.array([(idx >> ax) & 1 for ax in range(3)], dtype=bool)
        corners[:, idx] = np.where(sel, hi, lo)
    quads = [
        (0, 1, 3, 2),  # z = lo
        (4, 5, 7, 6),  # z = hi
        (0, 1, 5, 4),  # y = lo
        (2, 3, 7, 6),  # y = hi
        (0, 2, 6, 4),  # x = lo
        (1, 3, 7, 5),  # x = hi
    ]
    tris = np.empty((k, 12, 3, 3))
    for qi, (i0, i1, i2, i3) in enumerate(quads):
        tris[:, 2 * qi] = corners[:, (i0, i1, i2)]
        tris[:, 2 * qi + 1] = corners[:, (i0, i2, i3)]
    return tris


def segments_intersect_boxes(p0, p1, lo, hi) -> np.ndarray:
    """Slab test: does segment [p0, p1] hit box k? Returns (..., K) bool."""
    p0 = np.asarray(p0, float)[..., None, :]
    p1 = np.asarray(p1, float)[..., None, :]
    d = p1 - p0
    small = np.abs(d) < 1e-300
    safe_d = np.where(small, 1.0, d)
    t0 = (lo - p0) / safe_d
    t1 = (hi - p0) / safe_d
    tmin = np.where(small, -np.inf, np.minimum(t0, t1))
    tmax = np.where(small, np.inf, np.maximum(t0, t1))
    # axes where the segment is parallel and outside the slab never intersect
    outside = small & ((p0 < lo) | (p0 > hi))
    enter = np.max(tmin, axis=-1)
    exit_ = np.min(tmax, axis=-1)
    hit = (enter <= exit_) & (exit_ >= 0.0) & (enter <= 1.0)
    return hit & ~np.any(outside, axis=-1)


def triangles_intersect_boxes(tri, lo, hi) -> np.ndarray:
    """Separating-axis triangle vs AABB test; tri (..., 3, 3), boxes (K, 3).

    Returns (..., K) bool. Exact for proper triangles; degenerate triangles must
    be reduced to segments/points by the caller.
    """
    tri = np.asarray(tri, float)
    c = (lo + hi) / 2.0
    h = (hi - lo) / 2.0
    v = tri[..., None, :, :] - c[:, None, :]  # (..., K, 3, 3)

    # axis test helper: project triangle verts and box extents on axis
    def separated_on(axis, radius):
        proj = _dot(v, axis[..., None, :])  # (..., K, 3)
        return (np.min(proj, axis=-1) > radius) | (np.max(proj, axis=-1) < -radius)

    sep = np.zeros(v.shape[:-2], dtype=bool)
    # box face normals
    for ax in range(3):
        mn = np.min(v[..., :, ax], axis=-1)
        mx = np.max(v[..., :, ax], axis=-1)
        sep |= (mn > h[:, ax]) | (mx < -h[:, ax])
    # triangle plane
    e0 = v[..., 1, :] - v[..., 0, :]
    e1 = v[..., 2, :] - v[..., 1, :]
    e2 = v[..., 0, :] - v[..., 2, :]
    n = np.cross(e0, e1)
    rad = _dot(np.abs(n), h[:, :])
    sep |= separated_on(n, rad)
    # 9 edge cross-products
    units = np.eye(3)
    for e in (e0, e1, e2):
        for ax in range(3):
            axis = np.cross(units[ax], e)
            rad = _dot(np.abs(axis), h[:, :])
            sep |= separated_on(axis, rad)
    return ~sep


def _dist_segments_triangles(s0, s1, tri) -> np.ndarray:
    """min distance between segment and triangles tri (..., 3, 3); no overlap test."""
    ta, tb, tc = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    d = np.minimum(
        dist_point_triangle(s0, ta, tb, tc), dist_point_triangle(s1, ta, tb, tc)
    )
    for e0, e1 in ((ta, tb), (tb, tc), (tc, ta)):
        d = np.minimum(d, dist_seg_seg(np.broadcast_to(s0, e0.shape), np.broadcast_to(s1, e0.shape), e0, e1))
    return d


def dist_segment_boxes(p0, p1, obstacles: ObstacleMap) -> np.ndarray:
    """Exact distance from segment to each obstacle box; (K,) result."""
    k = len(obstacles)
    if k == 0:
        return np.zeros((0,))
    out = np.full(k, np.inf)
    hit = segments_intersect_boxes(p0, p1, obstacles.lo, obstacles.hi)
    out[hit] = 0.0
    if np.all(hit):
        return out
    tris = obstacles.face_triangles()[~hit]  # (K', 12, 3, 3)
    d = _dist_segments_triangles(np.asarray(p0, float), np.asarray(p1, float), tris)
    out[~hit] = np.min(d, axis=-1)
    return out


def _dist_triangle_triangles(a, tri) -> np.ndarray:
    """min distance between one triangle a (3,3) and triangles tri (..., 3, 3)."""
    pa, pb, pc = a
    ta, tb, tc = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    d = np.full(tri.shape[:-2], np.inf)
    for p in (pa, pb, pc):
        d = np.minimum(d, dist_point_triangle(p, ta, tb, tc))
    for q in (ta, tb, tc):
        d = np.minimum(d, dist_point_triangle(q, pa, pb, pc))
    edges_a = ((pa, pb), (pb, pc), (pc, pa))
    edges_t = ((ta, tb), (tb, tc), (tc, ta))
    for a0, a1 in edges_a:
        for b0, b1 in edges_t:
            d = np.minimum(d, dist_seg_seg(np.broadcast_to(a0, b0.shape), np.broadcast_to(a1, b0.shape), b0, b1))
    return d


def dist_triangle_boxes(tri, obstacles: ObstacleMap) -> np.ndarray:
    """Exact distance from a proper triangle (3, 3) to each obstacle box."""
    k = len(obstacles)
    if k == 0:
        return np.zeros((0,))
    tri = np.asarray(tri, float)
    out = np.full(k, np.inf)
    hit = triangles_intersect_boxes(tri, obstacles.lo, obstacles.hi)
    out[hit] = 0.0
    if np.all(hit):
        return out
    face_tris = obstacles.face_triangles()[~hit]
    d = _dist_triangle_triangles(tri, face_tris)
    out[~hit] = np.min(d, axis=-1)
    return out


def _canonical_hull(points) -> np.ndarray:
    """Reduce 1-3 points to a non-degenerate point/segment/triangle vertex array."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0 or pts.shape[0] > 3 or pts.shape[1] != 3:
        raise ValueError("hull takes 1 to 3 points")
    # drop duplicates
    uniq = [pts[0]]
    for p in pts[1:]:
        if all(np.linalg.norm(p - q) > 1e-12 for q in uniq):
            uniq.append(p)
    pts = np.array(uniq)
    if pts.shape[0] == 3:
        n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        if np.linalg.norm(n) <= _DEG_EPS:
            # colinear: keep the two extreme points along the dominant direction
            d = pts[np.argmax([np.linalg.norm(p - pts[0]) for p in pts])] - pts[0]
            proj = pts @ d
            pts = pts[[int(np.argmin(proj)), int(np.argmax(proj))]]
    return pts


def hull_clearance(points, obstacles: ObstacleMap) -> float:
    """Exact min distance from the convex hull of 1-3 points to the obstacle set."""
    pts = _canonical_hull(points)
    if len(obstacles) == 0:
        return np.inf
    hull_lo = np.min(pts, axis=0)
    hull_hi = np.max(pts, axis=0)
    lower = dist_box_box(hull_lo, hull_hi, obstacles.lo, obstacles.hi)
    order = np.argsort(lower, kind="stable")
    best = np.inf
    for k in order:
        if lower[k] >= best:
            break
        sub = ObstacleMap(obstacles.lo[k : k + 1], obstacles.hi[k : k + 1])
        if pts.shape[0] == 1:
            d = float(dist_point_boxes(pts[0], sub.lo, sub.hi)[0])
        elif pts.shape[0] == 2:
            d = float(dist_segment_boxes(pts[0], pts[1], sub)[0])
        else:
            d = float(dist_triangle_boxes(pts, sub)[0])
        best = min(best, d)
    return float(best)


def check_hull_free(points, r: float, obstacles: ObstacleMap) -> bool:
    """True iff the hull of the points, inflated by radius r, misses every obstacle.

    Clearance of exactly r counts as blocked.
    """
    return hull_clearance(points, obstacles) > r


# ---------------------------------------------------------------------------
# safe flight corridor (axis-search box expansion)
# ---------------------------------------------------------------------------


class InfeasibleRegionError(ValueError):
    """Raised when no obstacle-free corridor exists for the requested points."""


def box_clearance(lo, hi, obstacles: ObstacleMap) -> float:
    if len(obstacles) == 0:
        return np.inf
    return float(np.min(dist_box_box(lo, hi, obstacles.lo, obstacles.hi)))


def build_sfc(points, r: float, obstacles: ObstacleMap, bounds: AABox) -> ConvexRegion:
    """Axis-aligned safe flight corridor around 1-3 points.

    Starts from the bounding box of the points, then pushes each face outward
    (+x, -x, +y, -y, +z, -z) to the exact obstacle clearance limit or the
    workspace bounds shrunk by r, repeating until no face moves. The result
    contains the input points and keeps clearance >= r from every obstacle.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.min(pts, axis=0).copy()
    hi = np.max(pts, axis=0).copy()
    if box_clearance(lo, hi, obstacles) <= r * (1.0 - 1e-12):
        raise InfeasibleRegionError(
            "bounding box of corridor points is not obstacle-free after inflation"
        )
    # workspace walls act like obstacles, but never shrink below the seed box
    wall_lo = np.minimum(lo, bounds.lo + r)
    wall_hi = np.maximum(hi, bounds.hi - r)

    olo, ohi = obstacles.lo, obstacles.hi
    moved = True
    passes = 0
    while moved and passes < 4:
        moved = False
        passes += 1
        for ax in range(3):
            o1, o2 = (ax + 1) % 3, (ax + 2) % 3
            if len(obstacles):
                overlap = (
                    (olo[:, o1] - r < hi[o1])
                    & (ohi[:, o1] + r > lo[o1])
                    & (olo[:, o2] - r < hi[o2])
                    & (ohi[:, o2] + r > lo[o2])
                )
            else:
                overlap = np.zeros(0, dtype=bool)
            # grow +axis face
            ahead = overlap & (olo[:, ax] - r >= hi[ax] - 1e-12)
            limit = wall_hi[ax]
            if np.any(ahead):
                limit = min(limit, float(np.min(olo[ahead, ax])) - r)
            if limit > hi[ax] + 1e-15:
                hi[ax] = limit
                moved = True
            # grow -axis face
            behind = overlap & (ohi[:, ax] + r <= lo[ax] + 1e-12)
            limit = wall_lo[ax]
            if np.any(behind):
                limit = max(limit, float(np.max(ohi[behind, ax])) + r)
            if limit < lo[ax] - 1e-15:
                lo[ax] = limit
                moved = True
    return region_from_box(lo, hi, kind="sfc")


def sfc_box(region: ConvexRegion) -> tuple[np.ndarray, np.ndarray]:
    """Recover (lo, hi) corners from an axis-box region built by build_sfc."""
    if region.kind != "sfc" or region.normals.shape != (6, 3):
        raise ValueError("not an axis-box region")
    return region.offsets[:3].copy(), -region.offsets[3:].copy()


def select_sfc_points(h: int, p_hat, g_prev, w, r: float, obstacles: ObstacleMap):
    """Pick the corridor seed points for one agent at state update step h.

    Step 0 uses {position, waypoint}. Later steps use {position, previous
    subgoal, waypoint} when that hull is obstacle-free after inflation, and fall
    back to {position, previous subgoal} otherwise.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    w = np.asarray(w, dtype=float)
    if h == 0:
        return [p_hat, w]
    g_prev = np.asarray(g_prev, dtype=float)
    if check_hull_free([p_hat, g_prev, w], r, obstacles):
        return [p_hat, g_prev, w]
    return [p_hat, g_prev]


# ---------------------------------------------------------------------------
# modified buffered Voronoi cells
# ---------------------------------------------------------------------------


def _pair_closest_points(p_all, g_all, iu, ju):
    """Closest points between segments [p_i, g_i] and [p_j, g_j] for index pairs.

    Pairs are evaluated with the lower agent index as segment a so that every
    replica resolves parameter ties identically regardless of perspective.
    """
    c_a0 = p_all[iu]
    c_a1 = g_all[iu]
    c_b0 = p_all[ju]
    c_b1 = g_all[ju]
    s, t = seg_seg_params(c_a0, c_a1, c_b0, c_b1)
    return c_a0 + s[:, None] * (c_a1 - c_a0), c_b0 + t[:, None] * (c_b1 - c_b0)


def build_bvc_all(p_hat_all, g_prev_all, r: float) -> list[ConvexRegion]:
    """Buffered Voronoi cell for every agent from positions and previous subgoals.

    The separating plane between agents i and j is the perpendicular bisector of
    the closest points between segments [p_i, g_i] and [p_j, g_j], buffered by
    the radius r. Touching segments fall back to the position-difference normal;
    coincident positions are a hard error (the safety invariant excludes them).
    """
    p = np.atleast_2d(np.asarray(p_hat_all, dtype=float))
    g = np.atleast_2d(np.asarray(g_prev_all, dtype=float))
    n_agents = p.shape[0]
    if n_agents <= 1:
        return [ConvexRegion(np.zeros((0, 3)), np.zeros(0), "bvc")] * n_agents
    iu, ju = np.triu_indices(n_agents, k=1)
    c_lo, c_hi = _pair_closest_points(p, g, iu, ju)
    delta = c_lo - c_hi
    dist = np.linalg.norm(delta, axis=1)
    touching = dist <= 1e-12
    if np.any(touching):
        dp = p[iu[touching]] - p[ju[touching]]
        dp_norm = np.linalg.norm(dp, axis=1)
        if np.any(dp_norm <= 1e-12):
            raise ValueError(
                "coincident agent positions: buffered Voronoi cell undefined"
            )
        delta[touching] = dp / dp_norm[:, None]
        dist[touching] = 0.0
    normals_lo = delta / np.where(dist > 0, dist, 1.0)[:, None]
    normals_lo[touching] = delta[touching]

    regions = []
    pair_of = {}
    for k, (i, j) in enumerate(zip(iu, ju)):
        pair_of[(int(i), int(j))] = k
    for i in range(n_agents):
        rows_n = np.empty((n_agents - 1, 3))
        rows_b = np.empty(n_agents - 1)
        for row, j in enumerate(jj for jj in range(n_agents) if jj != i):
            k = pair_of[(min(i, j), max(i, j))]
            if i < j:
                n_ij = normals_lo[k]
                c_ji = c_hi[k]
            else:
                n_ij = -normals_lo[k]
                c_ji = c_lo[k]
            rows_n[row] = n_ij
            rows_b[row] = n_ij @ c_ji + r + 0.5 * dist[k]
        regions.append(ConvexRegion(rows_n, rows_b, "bvc"))
    return regions


def build_bvc(i: int, p_hat_all, g_prev_all, r: float) -> ConvexRegion:
    """Buffered Voronoi cell of a single agent (bit-identical to build_bvc_all)."""
    return build_bvc_all(p_hat_all, g_prev_all, r)[i]
