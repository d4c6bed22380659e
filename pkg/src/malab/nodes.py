"""Node sets: domain discretizations carrying clipped Voronoi dual cells.

A node set is the mesh every PL convex function lives on: interior nodes
strictly inside the domain polygon, boundary nodes on its edges, and one
clipped Voronoi cell per interior node for mass assignment.
"""
from __future__ import annotations

import csv
import io

import numpy as np
from scipy.spatial import Delaunay

from .errors import GeometryError
from .geometry import ConvexPolygon, clip_tagged, _polygon_or_none


class NodeSet:
    """Planar nodes with boundary flags and lazy dual cells.

    Invariants (checked on construction): boundary nodes sit on the
    domain polygon boundary within ``1e-10`` of the diameter, interior
    nodes sit strictly inside.  Dual cells are the Voronoi cells of the
    interior nodes clipped to the domain; they tile it exactly.
    """

    def __init__(self, domain: ConvexPolygon, points, boundary_flags, validate: bool = True):
        self.domain = domain
        self.points = np.asarray(points, dtype=float)
        self.boundary = np.asarray(boundary_flags, dtype=bool)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise GeometryError("points must be an (n, 2) array")
        if len(self.points) != len(self.boundary):
            raise GeometryError("points and boundary flags disagree in length")
        self._dual_cells = None
        if validate:
            self._check_placement()

    def _check_placement(self):
        diam = self.domain.diameter()
        if self.boundary.any():
            d = self.domain.boundary_distance(self.points[self.boundary])
            if np.max(d) > 1e-10 * diam:
                raise GeometryError("a flagged boundary node is off the domain boundary")
        interior = self.points[~self.boundary]
        if len(interior) == 0:
            raise GeometryError("node set has no interior nodes")
        inside = self.domain.contains(interior)
        d = self.domain.boundary_distance(interior)
        if not (np.all(inside) and np.min(d) > 1e-12 * diam):
            raise GeometryError("an interior node is not strictly inside the domain")

    def __len__(self):
        return len(self.points)

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def dual_cells(self):
        """Clipped Voronoi cell per interior node (indexed like points;
        boundary entries are None).  Computed on first use and cached."""
        if self._dual_cells is None:
            self._dual_cells = _clipped_voronoi(self.domain, self.points, self.boundary)
        return self._dual_cells

    def dual_areas(self) -> np.ndarray:
        """Per-node dual cell area (zero at boundary nodes)."""
        areas = np.zeros(len(self.points))
        for i, cell in enumerate(self.dual_cells()):
            if cell is not None:
                areas[i] = cell.area()
        return areas

    def check_tiling(self, rel_tol: float = 1e-8) -> float:
        """Relative gap between the dual-cell area sum and the domain area."""
        gap = abs(self.dual_areas().sum() - self.domain.area()) / self.domain.area()
        if gap > rel_tol:
            raise GeometryError(f"dual cells do not tile the domain (rel gap {gap:.3e})")
        return gap


def _clipped_voronoi(domain, points, boundary):
    interior = np.flatnonzero(~boundary)
    pts = points[interior]
    cells = [None] * len(points)
    if len(pts) == 1:
        cells[interior[0]] = domain
        return cells
    if len(pts) < 3:
        neighbor_lists = [[j for j in range(len(pts)) if j != i] for i in range(len(pts))]
    else:
        tri = Delaunay(pts)
        indptr, indices = tri.vertex_neighbor_vertices
        neighbor_lists = [indices[indptr[i]:indptr[i + 1]] for i in range(len(pts))]
    for i, nbrs in enumerate(neighbor_lists):
        verts = domain.vertices
        tags = [None] * len(verts)
        p = pts[i]
        for j in nbrs:
            q = pts[j]
            normal = q - p
            offset = 0.5 * (q @ q - p @ p)
            verts, tags = clip_tagged(verts, tags, normal, offset, None)
            if len(verts) < 3:
                break
        cell = _polygon_or_none(verts)
        if cell is None:
            raise GeometryError(f"empty dual cell at interior node {interior[i]}")
        cells[interior[i]] = cell
    return cells


def grid_nodes(domain: ConvexPolygon, n: int, seed=None, jitter: float = 0.0,
               margin_frac: float = 0.3) -> NodeSet:
    """Clipped n-by-n grid of interior nodes plus boundary nodes on edges.

    The grid spans the bounding box; interior candidates closer than
    ``margin_frac * h`` to the boundary are dropped to avoid sliver dual
    cells.  ``jitter`` perturbs interior nodes by that fraction of the
    spacing (seeded), which is how independent re-discretizations of the
    same problem are produced.
    """
    lo, hi = domain.bounding_box()
    h = float(max(hi - lo)) / (n - 1)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    cand = np.column_stack([xx.ravel(), yy.ravel()])
    inside = domain.contains(cand)
    cand = cand[inside]
    dist = domain.boundary_distance(cand)
    cand = cand[dist >= margin_frac * h]
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        cand = cand + jitter * h * rng.uniform(-1.0, 1.0, size=cand.shape)
        dist = domain.boundary_distance(cand)
        keep = domain.contains(cand) & (dist >= margin_frac * h)
        cand = cand[keep]
    bpts = boundary_nodes(domain, h)
    points = np.vstack([cand, bpts])
    flags = np.concatenate([np.zeros(len(cand), bool), np.ones(len(bpts), bool)])
    return NodeSet(domain, points, flags)


def boundary_nodes(domain: ConvexPolygon, spacing: float) -> np.ndarray:
    """Polygon vertices plus points along each edge at roughly the spacing."""
    out = []
    v = domain.vertices
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        length = np.linalg.norm(b - a)
        k = max(1, int(np.ceil(length / spacing)))
        for t in np.arange(k) / k:
            out.append(a + t * (b - a))
    return np.asarray(out)


# -- CSV round-trip ----------------------------------------------------------

def nodes_to_csv(nodes: NodeSet, values=None) -> str:
    """Serialize as ``x,y,value,boundary`` rows (lossless float text)."""
    if values is None:
        values = np.zeros(len(nodes))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "value", "boundary"])
    for p, v, b in zip(nodes.points, values, nodes.boundary):
        w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(v)), int(b)])
    return buf.getvalue()


def nodes_from_csv(text: str, domain: ConvexPolygon = None):
    """Parse ``x,y,value,boundary`` rows; returns (NodeSet, values).

    Without a domain polygon the hull of the boundary nodes is used.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y", "value", "boundary"]:
        raise GeometryError("node CSV must start with header x,y,value,boundary")
    data = np.array([[float(c) for c in r] for r in rows[1:] if r])
    if data.size == 0:
        raise GeometryError("node CSV has no rows")
    points = data[:, :2]
    values = data[:, 2]
    flags = data[:, 3] != 0
    if domain is None:
        bpts = points[flags]
        if len(bpts) < 3:
            raise GeometryError("cannot infer a domain from fewer than 3 boundary nodes")
        domain = _hull_polygon(bpts)
    return NodeSet(domain, points, flags), values


def _hull_polygon(points: np.ndarray) -> ConvexPolygon:
    from scipy.spatial import ConvexHull

    hull = ConvexHull(points)
    return ConvexPolygon(points[hull.vertices])


def polygon_to_csv(poly: ConvexPolygon) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y"])
    for p in poly.vertices:
        w.writerow([repr(float(p[0])), repr(float(p[1]))])
    return buf.getvalue()


def polygon_from_csv(text: str) -> ConvexPolygon:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise GeometryError("polygon CSV must start with header x,y")
    pts = [[float(c) for c in r] for r in rows[1:] if r]
    return ConvexPolygon(pts)
