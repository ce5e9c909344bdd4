"""Projection along a motion direction, triangle clipping, broad phase and the 3D intersection oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateTriangle, ZeroDirection
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class ProjectionFrame:
    """Orthonormal frame ``(e1, e2, u_hat)``; ``e1, e2`` span the plane perpendicular to ``u_hat``."""

    u_hat: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def matrix(self) -> np.ndarray:
        """Rows ``e1, e2, u_hat``; maps world coordinates to ``(x, y, depth)``."""
        return np.stack([self.e1, self.e2, self.u_hat])


def orthonormal_basis(direction) -> ProjectionFrame:
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(d)
    if not np.isfinite(norm) or norm <= 1e-9:
        raise ZeroDirection(f"direction {d.tolist()} has norm {norm}")
    u = d / norm
    # pivot on the axis least aligned with u
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(u)))] = 1.0
    e1 = axis - np.dot(axis, u) * u
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    e2 /= np.linalg.norm(e2)
    return ProjectionFrame(u, e1, e2)


class ProjectedMesh(NamedTuple):
    coords2d: np.ndarray  # (N_V, 2) coordinates along (e1, e2)
    depth: np.ndarray  # (N_V,) v . u_hat


def project_points(points, frame: ProjectionFrame) -> ProjectedMesh:
    p = np.asarray(points, dtype=np.float64)
    return ProjectedMesh(np.stack([p @ frame.e1, p @ frame.e2], axis=1), p @ frame.u_hat)


def project_mesh(mesh: Mesh, frame: ProjectionFrame) -> ProjectedMesh:
    return project_points(mesh.vertices, frame)


def unproject(projected: ProjectedMesh, frame: ProjectionFrame) -> np.ndarray:
    c, d = projected
    return c[:, :1] * frame.e1 + c[:, 1:] * frame.e2 + d[:, None] * frame.u_hat


# --- 2D primitives -----------------------------------------------------------

def signed_area(tri) -> float:
    (x0, y0), (x1, y1), (x2, y2) = np.asarray(tri, dtype=np.float64).tolist()
    return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


def polygon_area(corners) -> float:
    c = np.asarray(corners, dtype=np.float64).reshape(-1, 2)
    if len(c) < 3:
        return 0.0
    x, y = c[:, 0], c[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class ConvexPolygon2D:
    """Counter-clockwise convex polygon produced by :func:`clip_triangles`.

    ``labels[k]`` records where corner ``k`` came from, in terms of the
    caller's (unreordered) triangle vertex numbering:

    * ``("a", i)`` -- vertex ``i`` of the first triangle
    * ``("b", j)`` -- vertex ``j`` of the second triangle
    * ``("x", (i0, i1), (j0, j1))`` -- crossing of edge ``i0-i1`` of the first
      triangle with edge ``j0-j1`` of the second
    """

    corners: np.ndarray
    labels: tuple = ()

    @property
    def empty(self) -> bool:
        return len(self.corners) == 0

    def __len__(self):
        return len(self.corners)

    @property
    def area(self) -> float:
        return polygon_area(self.corners)


EMPTY_POLYGON = ConvexPolygon2D(np.zeros((0, 2)), ())


def _edge_key(i, j):
    return (i, j) if i < j else (j, i)


def _area2(p0, p1, p2):
    return (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])


def clip_triangles(t1, t2, area_tol: float = 0.0) -> ConvexPolygon2D:
    """Intersection of two 2D triangles by successive half-plane clipping.

    Either triangle may be given in any orientation. Returns an empty polygon
    when the overlap area is below ``area_tol``.
    """
    t1 = [(float(x), float(y)) for x, y in np.asarray(t1, dtype=np.float64).reshape(3, 2).tolist()]
    t2 = [(float(x), float(y)) for x, y in np.asarray(t2, dtype=np.float64).reshape(3, 2).tolist()]
    order1 = (0, 1, 2) if _area2(*t1) >= 0 else (0, 2, 1)
    order2 = (0, 1, 2) if _area2(*t2) >= 0 else (0, 2, 1)
    a = [t1[k] for k in order1]
    b = [t2[k] for k in order2]

    # (point, label, line of the edge leaving this corner)
    poly = [
        (a[k], ("a", order1[k]), ("a", _edge_key(order1[k], order1[(k + 1) % 3])))
        for k in range(3)
    ]
    for j in range(3):
        (cx0, cy0), (cx1, cy1) = b[j], b[(j + 1) % 3]
        ex, ey = cx1 - cx0, cy1 - cy0
        clip_line = ("b", _edge_key(order2[j], order2[(j + 1) % 3]))
        dist = [ex * (p[1] - cy0) - ey * (p[0] - cx0) for p, _, _ in poly]
        if min(dist) >= 0:
            continue
        out = []
        for k in range(len(poly)):
            s, e = poly[k - 1], poly[k]
            ds, de = dist[k - 1], dist[k]
            if de >= 0:
                if ds < 0:
                    out.append((_cross_point(s[0], e[0], ds, de), _cross_label(s[2], clip_line), s[2]))
                out.append(e)
            elif ds >= 0:
                out.append((_cross_point(s[0], e[0], ds, de), _cross_label(s[2], clip_line), clip_line))
        poly = out
        if not poly:
            return EMPTY_POLYGON

    # drop coincident consecutive corners left by clips through existing corners
    scale = max(1.0, *(abs(c) for p in t1 + t2 for c in p))
    tiny = (1e-13 * scale) ** 2
    pts, labels = [], []
    for p, lab, _ in poly:
        if pts and (p[0] - pts[-1][0]) ** 2 + (p[1] - pts[-1][1]) ** 2 <= tiny:
            continue
        pts.append(p)
        labels.append(lab)
    while len(pts) > 1 and (pts[0][0] - pts[-1][0]) ** 2 + (pts[0][1] - pts[-1][1]) ** 2 <= tiny:
        pts.pop()
        labels.pop()
    if len(pts) < 3:
        return EMPTY_POLYGON
    area = 0.5 * sum(_area2(pts[0], pts[k], pts[k + 1]) for k in range(1, len(pts) - 1))
    if area < area_tol or area <= 0.0:
        return EMPTY_POLYGON
    return ConvexPolygon2D(np.array(pts), tuple(labels))


def separated_triangles_2d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise test whether 2D triangles ``a[k]`` and ``b[k]`` are strictly separated.

    Uses the six edge normals as candidate separating axes, which is exact
    for triangles. Degenerate triangles are never reported as separated.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    def outside(p, q):
        # all of q strictly outside some edge of p
        s = np.sign(_area2_batch(p[:, 0], p[:, 1], p[:, 2]))
        sep = np.zeros(len(p), dtype=bool)
        for k in range(3):
            e0, e1 = p[:, k], p[:, (k + 1) % 3]
            ex, ey = (e1 - e0).T
            d = ex[:, None] * (q[:, :, 1] - e0[:, None, 1]) - ey[:, None] * (q[:, :, 0] - e0[:, None, 0])
            sep |= np.all(d * s[:, None] < 0, axis=1)
        return sep & (s != 0)

    return outside(a, b) | outside(b, a)


def _area2_batch(p0, p1, p2):
    return (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])


def _cross_point(s, e, ds, de):
    t = ds / (ds - de)
    return (s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1]))


def _cross_label(line, clip_line):
    if line[0] == "a":
        return ("x", line[1], clip_line[1])
    # two edges of the clipping triangle meet at their shared vertex
    (shared,) = set(line[1]) & set(clip_line[1])
    return ("b", shared)


def barycentric(point, triangle) -> np.ndarray:
    """Barycentric coordinates of a 2D ``point`` with respect to ``triangle``."""
    p = np.asarray(point, dtype=np.float64)
    t = np.asarray(triangle, dtype=np.float64).reshape(3, 2)
    den = (t[1, 0] - t[0, 0]) * (t[2, 1] - t[0, 1]) - (t[2, 0] - t[0, 0]) * (t[1, 1] - t[0, 1])
    scale = max(float(np.ptp(t[:, 0])), float(np.ptp(t[:, 1])))
    if abs(den) <= 1e-300 or abs(den) <= 1e-15 * scale * scale:
        raise DegenerateTriangle(f"triangle {t.tolist()} has zero area")
    b1 = ((t[1, 0] - p[0]) * (t[2, 1] - p[1]) - (t[2, 0] - p[0]) * (t[1, 1] - p[1])) / den
    b2 = ((t[2, 0] - p[0]) * (t[0, 1] - p[1]) - (t[0, 0] - p[0]) * (t[2, 1] - p[1])) / den
    return np.array([b1, b2, 1.0 - b1 - b2])


def barycentric_batch(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Row-wise barycentric coordinates of ``points[k]`` in ``triangles[k]``; no degeneracy check."""
    p = np.asarray(points, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.float64)
    x0, x1, x2 = t[:, 0], t[:, 1], t[:, 2]
    den = (x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1]) - (x2[:, 0] - x0[:, 0]) * (x1[:, 1] - x0[:, 1])
    b1 = ((x1[:, 0] - p[:, 0]) * (x2[:, 1] - p[:, 1]) - (x2[:, 0] - p[:, 0]) * (x1[:, 1] - p[:, 1])) / den
    b2 = ((x2[:, 0] - p[:, 0]) * (x0[:, 1] - p[:, 1]) - (x0[:, 0] - p[:, 0]) * (x2[:, 1] - p[:, 1])) / den
    return np.stack([b1, b2, 1.0 - b1 - b2], axis=1)


# --- broad phase -----------------------------------------------------------------

def _shares_vertex(faces: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    fa = faces[pairs[:, 0]]
    fb = faces[pairs[:, 1]]
    return np.any(fa[:, :, None] == fb[:, None, :], axis=(1, 2))


def _boxes_overlap(lo, hi, pairs) -> np.ndarray:
    a, b = pairs[:, 0], pairs[:, 1]
    return np.all((lo[a] <= hi[b]) & (lo[b] <= hi[a]), axis=1)


def grid_box_pairs(lo: np.ndarray, hi: np.ndarray, cell: float | None = None) -> np.ndarray:
    """All index pairs ``(i < j)`` whose closed boxes ``[lo, hi]`` overlap, via uniform grid binning.

    ``cell`` defaults to the median box diagonal. Output is sorted lexicographically.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n, dim = lo.shape
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    if cell is None:
        cell = float(np.median(np.linalg.norm(hi - lo, axis=1)))
    extent = float(np.max(hi.max(axis=0) - lo.min(axis=0)))
    if not cell > 0:
        cell = extent if extent > 0 else 1.0
    # cap the grid resolution so that huge outlier boxes cannot explode the cell count
    cell = max(cell, extent / 256.0)
    origin = lo.min(axis=0)
    i0 = np.floor((lo - origin) / cell).astype(np.int64)
    i1 = np.floor((hi - origin) / cell).astype(np.int64)
    span = i1 - i0 + 1
    counts = np.prod(span, axis=1)
    owner = np.repeat(np.arange(n), counts)
    offset = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cells = np.empty((len(owner), dim), dtype=np.int64)
    stride = np.ones(n, dtype=np.int64)
    for d in range(dim):
        cells[:, d] = i0[owner, d] + (offset // stride[owner]) % span[owner, d]
        stride = stride * span[:, d]
    keys = np.ravel_multi_index(cells.T, tuple(cells.max(axis=0) + 1))
    order = np.argsort(keys, kind="stable")
    keys, owner = keys[order], owner[order]
    bounds = np.flatnonzero(np.diff(keys)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(keys)]])
    chunks = []
    for s, e in zip(starts, ends):
        k = e - s
        if k < 2:
            continue
        members = owner[s:e]
        ia, ib = np.triu_indices(k, 1)
        chunks.append(np.stack([members[ia], members[ib]], axis=1))
    if not chunks:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.concatenate(chunks)
    pairs.sort(axis=1)
    pairs = np.unique(pairs, axis=0)
    return pairs[_boxes_overlap(lo, hi, pairs)]


def exhaustive_box_pairs(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """O(N^2) reference for :func:`grid_box_pairs`."""
    n = len(lo)
    ia, ib = np.triu_indices(n, 1)
    pairs = np.stack([ia, ib], axis=1).astype(np.int64)
    return pairs[_boxes_overlap(np.asarray(lo), np.asarray(hi), pairs)]


def face_boxes_2d(projected: ProjectedMesh, faces: np.ndarray):
    tri = projected.coords2d[faces]
    return tri.min(axis=1), tri.max(axis=1)


def broad_phase_pairs(projected: ProjectedMesh, faces: np.ndarray) -> np.ndarray:
    """Candidate face pairs whose projected 2D boxes overlap, excluding pairs that share a vertex."""
    faces = np.asarray(faces, dtype=np.int64)
    lo, hi = face_boxes_2d(projected, faces)
    pairs = grid_box_pairs(lo, hi)
    return pairs[~_shares_vertex(faces, pairs)] if len(pairs) else pairs


def exhaustive_broad_phase_pairs(projected: ProjectedMesh, faces: np.ndarray) -> np.ndarray:
    faces = np.asarray(faces, dtype=np.int64)
    lo, hi = face_boxes_2d(projected, faces)
    pairs = exhaustive_box_pairs(lo, hi)
    return pairs[~_shares_vertex(faces, pairs)] if len(pairs) else pairs


# --- 3D triangle-triangle intersection ----------------------------------------------

def _orient2(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_touch_2d(p1, p2, q1, q2, tol):
    def side(a, b, c):
        o = _orient2(a, b, c)
        length = max(abs(b[0] - a[0]), abs(b[1] - a[1]), 1e-300)
        return 0.0 if abs(o) <= tol * length else o

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - tol <= c[0] <= max(a[0], b[0]) + tol
                and min(a[1], b[1]) - tol <= c[1] <= max(a[1], b[1]) + tol)

    o1, o2 = side(p1, p2, q1), side(p1, p2, q2)
    o3, o4 = side(q1, q2, p1), side(q1, q2, p2)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return ((o1 == 0 and on_segment(p1, p2, q1)) or (o2 == 0 and on_segment(p1, p2, q2))
            or (o3 == 0 and on_segment(q1, q2, p1)) or (o4 == 0 and on_segment(q1, q2, p2)))


def _point_in_tri_2d(p, t, tol):
    s = [_orient2(t[k], t[(k + 1) % 3], p) for k in range(3)]
    scale = max(max(abs(t[k][0] - t[(k + 1) % 3][0]), abs(t[k][1] - t[(k + 1) % 3][1])) for k in range(3))
    eps = tol * scale
    return all(x >= -eps for x in s) or all(x <= eps for x in s)


def _coplanar_intersect(a, b, normal, tol):
    drop = int(np.argmax(np.abs(normal)))
    keep = [k for k in range(3) if k != drop]
    a2 = [tuple(p[keep]) for p in a]
    b2 = [tuple(p[keep]) for p in b]
    for i in range(3):
        for j in range(3):
            if _segments_touch_2d(a2[i], a2[(i + 1) % 3], b2[j], b2[(j + 1) % 3], tol):
                return True
    return _point_in_tri_2d(a2[0], b2, tol) or _point_in_tri_2d(b2[0], a2, tol)


def _segment_hits_triangle(p, q, tri, tol):
    """Closed segment vs closed triangle, for degenerate (zero-area) inputs."""
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    nn = np.linalg.norm(n)
    if nn <= 1e-300:
        return False
    n = n / nn
    dp, dq = np.dot(p - tri[0], n), np.dot(q - tri[0], n)
    if dp > tol and dq > tol or dp < -tol and dq < -tol:
        return False
    if abs(dp) <= tol and abs(dq) <= tol:
        return _coplanar_intersect(np.array([p, q, q]), tri, n, tol)
    x = p + (q - p) * (dp / (dp - dq))
    drop = int(np.argmax(np.abs(n)))
    keep = [k for k in range(3) if k != drop]
    return _point_in_tri_2d(tuple(x[keep]), [tuple(v[keep]) for v in tri], tol)


def _degenerate_intersect(a, b, tol):
    a_deg = np.linalg.norm(np.cross(a[1] - a[0], a[2] - a[0])) <= 1e-300
    seg_tri, other = (a, b) if a_deg else (b, a)
    if np.linalg.norm(np.cross(other[1] - other[0], other[2] - other[0])) <= 1e-300:
        # both degenerate: compare every segment pair via tiny closest-distance check
        for i in range(3):
            for j in range(3):
                if _segment_distance(seg_tri[i], seg_tri[(i + 1) % 3], other[j], other[(j + 1) % 3]) <= tol:
                    return True
        return False
    return any(_segment_hits_triangle(seg_tri[i], seg_tri[(i + 1) % 3], other, tol) for i in range(3))


def _segment_distance(p1, q1, p2, q2):
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    c, b = d1 @ r, d1 @ d2
    den = a * e - b * b
    s = np.clip((b * f - c * e) / den, 0, 1) if den > 1e-300 else 0.0
    t = np.clip((b * s + f) / e, 0, 1) if e > 1e-300 else 0.0
    s = np.clip((b * t - c) / a, 0, 1) if a > 1e-300 else 0.0
    return float(np.linalg.norm(p1 + d1 * s - p2 - d2 * t))


def _plane_interval(p, d):
    """Interval of parameter ``p`` where a triangle with signed plane distances ``d`` crosses the plane."""
    lo = np.full(len(p), np.inf)
    hi = np.full(len(p), -np.inf)
    for i in range(3):
        on = d[:, i] == 0
        lo = np.where(on, np.minimum(lo, p[:, i]), lo)
        hi = np.where(on, np.maximum(hi, p[:, i]), hi)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        cross = d[:, i] * d[:, j] < 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = p[:, i] + (p[:, j] - p[:, i]) * d[:, i] / (d[:, i] - d[:, j])
        lo = np.where(cross, np.minimum(lo, t), lo)
        hi = np.where(cross, np.maximum(hi, t), hi)
    return lo, hi


def tri_tri_intersect_batch(a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """Closed-set intersection test for triangle pairs ``a[k]``, ``b[k]`` (each ``(K, 3, 3)``).

    Plane-splitting test: both triangles must straddle (or touch) the other's
    plane, and their crossing intervals on the common line must overlap.
    Distances within ``tol`` count as touching.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3, 3)
    k = len(a)
    result = np.zeros(k, dtype=bool)
    if k == 0:
        return result
    na = np.cross(a[:, 1] - a[:, 0], a[:, 2] - a[:, 0])
    nb = np.cross(b[:, 1] - b[:, 0], b[:, 2] - b[:, 0])
    la = np.linalg.norm(na, axis=1)
    lb = np.linalg.norm(nb, axis=1)
    degenerate = (la <= 1e-300) | (lb <= 1e-300)
    la = np.where(degenerate, 1.0, la)
    lb = np.where(degenerate, 1.0, lb)
    na /= la[:, None]
    nb /= lb[:, None]

    da = np.einsum("kij,kj->ki", a - b[:, :1], nb)
    db = np.einsum("kij,kj->ki", b - a[:, :1], na)
    da[np.abs(da) <= tol] = 0.0
    db[np.abs(db) <= tol] = 0.0
    separated = (np.all(da > 0, axis=1) | np.all(da < 0, axis=1)
                 | np.all(db > 0, axis=1) | np.all(db < 0, axis=1))
    coplanar = np.all(da == 0, axis=1) | np.all(db == 0, axis=1)
    general = ~separated & ~coplanar & ~degenerate

    if np.any(general):
        g = np.flatnonzero(general)
        line = np.cross(na[g], nb[g])
        line /= np.linalg.norm(line, axis=1)[:, None]
        pa = np.einsum("kij,kj->ki", a[g], line)
        pb = np.einsum("kij,kj->ki", b[g], line)
        alo, ahi = _plane_interval(pa, da[g])
        blo, bhi = _plane_interval(pb, db[g])
        result[g] = (alo <= bhi + tol) & (blo <= ahi + tol)

    for i in np.flatnonzero(~separated & (coplanar | degenerate)):
        if degenerate[i]:
            result[i] = _degenerate_intersect(a[i], b[i], tol)
        else:
            result[i] = _coplanar_intersect(a[i], b[i], na[i], tol)
    return result


def tri_tri_intersect_3d(a, b, tol: float = 1e-12) -> bool:
    """True iff the closed triangles ``a`` and ``b`` (each three 3D points) share a point."""
    return bool(tri_tri_intersect_batch(np.asarray(a)[None], np.asarray(b)[None], tol)[0])


def default_tolerance(mesh: Mesh) -> float:
    return 1e-9 * max(mesh.bbox_diagonal(), 1e-300)


def _candidate_pairs_3d(mesh: Mesh, tol: float, exhaustive: bool) -> np.ndarray:
    if exhaustive:
        ia, ib = np.triu_indices(mesh.n_faces, 1)
        pairs = np.stack([ia, ib], axis=1).astype(np.int64)
    else:
        tri = mesh.triangles()
        pairs = grid_box_pairs(tri.min(axis=1) - tol, tri.max(axis=1) + tol)
    if len(pairs):
        pairs = pairs[~_shares_vertex(mesh.faces, pairs)]
    return pairs


def find_intersecting_faces(mesh: Mesh, tol: float | None = None, exhaustive: bool = False):
    """Per-face intersection flags and the number of narrow-phase pairs tested.

    A face is flagged when it intersects some face with which it shares no
    vertex. ``exhaustive=True`` skips the grid broad phase and runs the
    narrow phase on every non-adjacent pair.
    """
    if tol is None:
        tol = default_tolerance(mesh)
    pairs = _candidate_pairs_3d(mesh, tol, exhaustive)
    flags = np.zeros(mesh.n_faces, dtype=bool)
    if len(pairs):
        tri = mesh.triangles()
        hit = tri_tri_intersect_batch(tri[pairs[:, 0]], tri[pairs[:, 1]], tol)
        flags[pairs[hit, 0]] = True
        flags[pairs[hit, 1]] = True
    return flags, len(pairs)


def count_intersecting_faces(mesh: Mesh, tol: float | None = None, exhaustive: bool = False):
    """``(count, fraction)`` of faces intersecting a non-adjacent face."""
    flags, _ = find_intersecting_faces(mesh, tol, exhaustive)
    count = int(flags.sum())
    return count, (count / mesh.n_faces if mesh.n_faces else 0.0)
