"""Planar convex polygons: validation, clipping, quadrature, distances.

Everything downstream (dual cells, Laguerre cells, sublevel sections,
experiment windows) is built out of the ``ConvexPolygon`` operations in
this module.  Polygons are immutable once constructed and all operations
return new objects, so values are safe to share across workers.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

from .errors import GeometryError

# Relative tolerance for duplicate-vertex pruning, scaled by the diameter.
_DUP_REL_TOL = 1e-12


def cross2(a, b):
    """z-component of the cross product of 2D vectors (arrays broadcast)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _as_points(vertices) -> np.ndarray:
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"expected an (n, 2) vertex array, got shape {pts.shape}")
    return pts


def shoelace_area(vertices: np.ndarray) -> float:
    """Signed area of a closed vertex loop (positive for CCW)."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class ConvexPolygon:
    """Strictly convex polygon with counterclockwise vertex order.

    Construction prunes repeated and collinear vertices (relative
    tolerance ``1e-12`` times the diameter) and then insists on strict
    convexity and nonzero area.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        pts = _as_points(vertices)
        if len(pts) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        diam = float(np.max(np.ptp(pts, axis=0)))
        if diam <= 0.0:
            raise GeometryError("polygon has zero diameter")
        tol = _DUP_REL_TOL * diam
        pts = _prune_loop(pts, tol)
        if len(pts) < 3:
            raise GeometryError("polygon degenerates after pruning collinear vertices")
        area = shoelace_area(pts)
        if area < 0:
            raise GeometryError("vertices must be in counterclockwise order")
        if area <= (tol * diam):
            raise GeometryError("polygon area is numerically zero")
        crosses = _edge_crosses(pts)
        if np.any(crosses <= 0):
            raise GeometryError("vertex loop is not strictly convex")
        v = pts.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __setattr__(self, name, value):
        raise AttributeError("ConvexPolygon is immutable")

    def __repr__(self):
        return f"ConvexPolygon({len(self.vertices)} vertices, area={self.area():.6g})"

    # -- basic measurements -------------------------------------------------

    def area(self) -> float:
        return shoelace_area(self.vertices)

    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0]
        a = cross.sum() / 2.0
        cx = np.sum((v[:, 0] + w[:, 0]) * cross) / (6.0 * a)
        cy = np.sum((v[:, 1] + w[:, 1]) * cross) / (6.0 * a)
        return np.array([cx, cy])

    def diameter(self) -> float:
        v = self.vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return math.sqrt(float(d2.max()))

    def bounding_box(self):
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def edge_normals(self):
        """Outward unit normals and offsets: inside iff ``n . x <= b``."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.column_stack([e[:, 1], -e[:, 0]])
        n /= np.linalg.norm(n, axis=1)[:, None]
        b = np.sum(n * v, axis=1)
        return n, b

    # -- point queries ------------------------------------------------------

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside (boundary counts, widened by tol)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, b = self.edge_normals()
        return np.all(pts @ n.T <= b[None, :] + tol, axis=1)

    def contains_point(self, point, tol: float = 0.0) -> bool:
        return bool(self.contains(np.asarray(point, dtype=float)[None, :], tol)[0])

    def boundary_distance(self, points) -> np.ndarray:
        """Distance from each point to the polygon boundary (sign-free)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts))
        for k, p in enumerate(pts):
            out[k] = _point_boundary_distance(self.vertices, p)
        return out

    def distance(self, point) -> float:
        """Euclidean distance from a point to the polygon (0 inside)."""
        p = np.asarray(point, dtype=float)
        if self.contains(p[None, :])[0]:
            return 0.0
        return _point_boundary_distance(self.vertices, p)

    # -- constructive operations ---------------------------------------------

    def clip_halfplane(self, normal, offset: float):
        """Intersect with ``{x : normal . x <= offset}``; None if empty."""
        verts, _ = clip_tagged(self.vertices, [None] * len(self.vertices), normal, offset, None)
        return _polygon_or_none(verts)

    def intersect(self, other: "ConvexPolygon"):
        verts = self.vertices
        tags = [None] * len(verts)
        n, b = other.edge_normals()
        for i in range(len(b)):
            verts, tags = clip_tagged(verts, tags, n[i], b[i], None)
            if len(verts) < 3:
                return None
        return _polygon_or_none(verts)

    def dilate(self, factor: float) -> "ConvexPolygon":
        """Scale about the centroid by the given factor."""
        if factor <= 0:
            raise GeometryError("dilation factor must be positive")
        c = self.centroid()
        return ConvexPolygon(c + factor * (self.vertices - c))

    def translate(self, shift) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.asarray(shift, dtype=float))

    def chebyshev_center(self):
        """Center and radius of the largest inscribed disc (via a tiny LP)."""
        n, b = self.edge_normals()
        a_ub = np.column_stack([n, np.ones(len(b))])
        res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=b,
                      bounds=[(None, None), (None, None), (0, None)], method="highs")
        if not res.success:
            raise GeometryError("Chebyshev center LP failed: " + res.message)
        return np.array(res.x[:2]), float(res.x[2])

    def hausdorff_distance(self, other: "ConvexPolygon") -> float:
        """Hausdorff distance between two convex polygons.

        For convex sets the sup over the continuum is attained at
        vertices, so checking vertex-to-set distances is exact.
        """
        d1 = max(other.distance(v) for v in self.vertices)
        d2 = max(self.distance(v) for v in other.vertices)
        return max(d1, d2)

    def grid_points(self, spacing: float, inset: float = 0.0) -> np.ndarray:
        """Axis-aligned grid of points inside the polygon at the given spacing."""
        lo, hi = self.bounding_box()
        xs = np.arange(lo[0], hi[0] + 0.5 * spacing, spacing)
        ys = np.arange(lo[1], hi[1] + 0.5 * spacing, spacing)
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        mask = self.contains(pts)
        if inset > 0:
            mask &= self.boundary_distance(pts) >= inset
        return pts[mask]


def _prune_loop(pts: np.ndarray, tol: float) -> np.ndarray:
    # Drop repeats, then vertices collinear with their cyclic neighbors.
    keep = [pts[0]]
    for p in pts[1:]:
        if np.linalg.norm(p - keep[-1]) > tol:
            keep.append(p)
    if len(keep) > 1 and np.linalg.norm(keep[0] - keep[-1]) <= tol:
        keep.pop()
    pts = np.asarray(keep)
    if len(pts) < 3:
        return pts
    prev = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    cross = cross2(pts - prev, nxt - pts)
    scale = max(1.0, float(np.abs(pts).max())) ** 2
    return pts[np.abs(cross) > 1e-14 * scale]


def _edge_crosses(pts: np.ndarray) -> np.ndarray:
    e = np.roll(pts, -1, axis=0) - pts
    return cross2(e, np.roll(e, -1, axis=0))


def _point_boundary_distance(vertices: np.ndarray, p: np.ndarray) -> float:
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    ab = b - a
    t = np.clip(np.sum((p - a) * ab, axis=1) / np.sum(ab * ab, axis=1), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.linalg.norm(proj - p, axis=1)))


def _polygon_or_none(verts: np.ndarray):
    if len(verts) < 3:
        return None
    try:
        return ConvexPolygon(verts)
    except GeometryError:
        return None


def clip_tagged(vertices, tags, normal, offset, new_tag):
    """One half-plane clip that carries a per-edge tag array.

    ``tags[i]`` labels the edge from vertex i to vertex i+1.  Edges cut by
    the clip line get ``new_tag``.  Used to remember which Laguerre
    neighbor produced each cell edge.
    """
    v = np.asarray(vertices, dtype=float)
    m = len(v)
    if m == 0:
        return v, []
    n = np.asarray(normal, dtype=float)
    d = v @ n - offset
    scale = max(1.0, float(np.abs(d).max()))
    eps = 1e-14 * scale
    out_v, out_t = [], []
    for i in range(m):
        j = (i + 1) % m
        di, dj = d[i], d[j]
        if di <= eps:
            out_v.append(v[i])
            if dj <= eps:
                out_t.append(tags[i])
            else:
                # Edge exits: keep the entry part, then the new clip edge.
                t = di / (di - dj)
                out_v.append(v[i] + t * (v[j] - v[i]))
                out_t.append(tags[i])
                out_t.append(new_tag)
        elif dj <= eps:
            # Edge enters.
            t = di / (di - dj)
            out_v.append(v[i] + t * (v[j] - v[i]))
            out_t.append(tags[i])
    if not out_v:
        return np.empty((0, 2)), []
    verts = np.asarray(out_v)
    # Fuse numerically coincident vertices produced by near-tangent clips.
    keep = []
    vtol = 1e-13 * max(1.0, float(np.abs(verts).max()))
    for i in range(len(verts)):
        j = (i + 1) % len(verts)
        if np.linalg.norm(verts[j] - verts[i]) > vtol:
            keep.append(i)
    if len(keep) < len(verts):
        verts = verts[keep]
        out_t = [out_t[i] for i in keep]
    return verts, out_t


# -- quadrature -------------------------------------------------------------

# Symmetric Gauss rules on the reference triangle, keyed by point count.
# Stored as (barycentric coordinates, weights summing to 1).
def _perm3(a, b, c):
    return [(a, b, c), (b, c, a), (c, a, b)]


_TRI_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    3: (np.array(_perm3(2 / 3, 1 / 6, 1 / 6)), np.full(3, 1 / 3)),
    6: (
        np.array(
            _perm3(0.108103018168070, 0.445948490915965, 0.445948490915965)
            + _perm3(0.816847572980459, 0.091576213509771, 0.091576213509771)
        ),
        np.concatenate([
            np.full(3, 0.223381589678011),
            np.full(3, 0.109951743655322),
        ]),
    ),
    12: (
        np.array(
            _perm3(0.501426509658179, 0.249286745170910, 0.249286745170910)
            + _perm3(0.873821971016996, 0.063089014491502, 0.063089014491502)
            + _perm3(0.053145049844816, 0.310352451033785, 0.636502499121399)
            + _perm3(0.053145049844816, 0.636502499121399, 0.310352451033785)
        ),
        np.concatenate([
            np.full(3, 0.116786275726379),
            np.full(3, 0.050844906370207),
            np.full(6, 0.082851075618374),
        ]),
    ),
}


def triangle_rule(order: int):
    """Quadrature nodes (barycentric) and weights for a triangle.

    ``order`` is the point count per triangle; supported: 1, 3, 6, 12.
    """
    if order not in _TRI_RULES:
        raise ValueError(f"no triangle rule with {order} points (have {sorted(_TRI_RULES)})")
    return _TRI_RULES[order]


def triangle_integrate(fn, tri: np.ndarray, order: int = 3) -> float:
    """Integrate ``fn`` (vectorized over (n,2) points) on one triangle."""
    bary, w = triangle_rule(order)
    pts = bary @ tri
    area = abs(shoelace_area(tri))
    return float(area * np.dot(w, fn(pts)))


def _tri_areas(tris: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(cross2(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]))


def _split4_vec(tris: np.ndarray) -> np.ndarray:
    """(T,3,2) -> (T,4,3,2) uniform midpoint subdivision."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.stack([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ], axis=1)


def integrate_triangles(fn, tris, order: int = 6, rel_tol: float = 0.0,
                        abs_tol: float = 0.0, max_level: int = 14) -> np.ndarray:
    """Per-triangle integrals of ``fn``, vectorized across all triangles.

    With positive tolerances each triangle is midpoint-subdivided until
    its estimated error is below its area-proportional share of the
    global budget ``max(abs_tol, rel_tol * |total|)``.  One ``fn`` call
    per refinement level evaluates every active quadrature point.
    """
    tris = np.asarray(tris, dtype=float)
    bary, w = triangle_rule(order)

    def rule(ts: np.ndarray) -> np.ndarray:
        pts = np.einsum("pb,tbx->tpx", bary, ts).reshape(-1, 2)
        vals = np.asarray(fn(pts), dtype=float).reshape(len(ts), -1)
        return _tri_areas(ts) * (vals @ w)

    vals = rule(tris)
    if rel_tol <= 0.0 and abs_tol <= 0.0:
        return vals
    out = np.zeros(len(tris))
    total_area = float(_tri_areas(tris).sum())
    budget_scale = max(abs_tol, rel_tol * float(np.abs(vals).sum()))
    cur_tris, cur_vals = tris, vals
    owners = np.arange(len(tris))
    for _ in range(max_level):
        children = _split4_vec(cur_tris)
        child_vals = rule(children.reshape(-1, 3, 2)).reshape(-1, 4)
        fine = child_vals.sum(axis=1)
        err = np.abs(fine - cur_vals)
        tol = budget_scale * (_tri_areas(cur_tris) / total_area)
        done = err <= tol
        np.add.at(out, owners[done], fine[done])
        if np.all(done):
            return out
        keep = ~done
        cur_tris = children[keep].reshape(-1, 3, 2)
        cur_vals = child_vals[keep].reshape(-1)
        owners = np.repeat(owners[keep], 4)
    np.add.at(out, owners, cur_vals)
    return out


def polygon_triangles(poly: ConvexPolygon) -> np.ndarray:
    """Fan triangulation from the centroid, as a (T,3,2) array."""
    c = poly.centroid()
    v = poly.vertices
    nxt = np.roll(v, -1, axis=0)
    return np.stack([np.broadcast_to(c, v.shape), v, nxt], axis=1)


def polygon_integrate(fn, poly: ConvexPolygon, order: int = 3,
                      rel_tol: float = 0.0, abs_tol: float = 0.0,
                      max_level: int = 14) -> float:
    """Integrate ``fn`` over a convex polygon.

    With the default zero tolerances this is a fixed-order rule on the
    centroid fan; positive tolerances turn on adaptive subdivision
    (used wherever a contract pins the integral accuracy rather than
    the rule).
    """
    vals = integrate_triangles(fn, polygon_triangles(poly), order=order,
                               rel_tol=rel_tol, abs_tol=abs_tol, max_level=max_level)
    return float(vals.sum())


def segment_integrate(fn, a, b, npts: int = 8) -> float:
    """Gauss-Legendre line integral of ``fn`` along the segment [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, w = np.polynomial.legendre.leggauss(npts)
    t = 0.5 * (x + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    length = float(np.linalg.norm(b - a))
    return 0.5 * length * float(np.dot(w, fn(pts)))


def regular_polygon(n_sides: int, radius: float = 1.0, center=(0.0, 0.0)) -> ConvexPolygon:
    ang = 2 * np.pi * np.arange(n_sides) / n_sides
    c = np.asarray(center, dtype=float)
    return ConvexPolygon(c + radius * np.column_stack([np.cos(ang), np.sin(ang)]))


def rectangle(lo, hi) -> ConvexPolygon:
    (x0, y0), (x1, y1) = lo, hi
    return ConvexPolygon([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
