"""Lower convex hulls of lifted planar point sets.

The lower hull of points ``(x_i, y_i, v_i)`` is the graph of the largest
convex function below the data, which is how piecewise-linear convex
functions, convex envelopes and Laguerre diagrams are all realized here.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .errors import DegenerateGeometryError

# A face is "lower" when its outward unit normal points down by more than
# this; vertical faces project to measure zero and are discarded.
_DOWN_TOL = 1e-12


def lower_hull_3d(lifted_points):
    """Lower faces of the convex hull of lifted points.

    Parameters
    ----------
    lifted_points : (n, 3) array
        Points ``(x, y, z)``; the planar projections must not be all
        collinear.

    Returns
    -------
    faces : (m, 3) int array
        Vertex-index triangles of the lower hull, each oriented
        counterclockwise in planar projection.
    on_hull : (n,) bool array
        True where the point lies on the lower hull surface (within
        ``1e-10`` times the z-range).
    """
    pts = np.asarray(lifted_points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateGeometryError(f"expected (n, 3) lifted points, got {pts.shape}")
    n = len(pts)
    if n < 3:
        raise DegenerateGeometryError("need at least 3 lifted points")
    if _projection_collinear(pts[:, :2]):
        raise DegenerateGeometryError("planar projections are all collinear")

    faces = _qhull_lower_faces(pts)
    faces = _orient_ccw(pts, faces)
    faces = _drop_sliver_faces(pts, faces)
    if len(faces) == 0:
        raise DegenerateGeometryError("no nondegenerate lower faces")

    grads, offs = face_planes(pts, faces)
    hull_vals = evaluate_max_planes(grads, offs, pts[:, :2])
    zrange = float(np.ptp(pts[:, 2]))
    tol = 1e-10 * max(zrange, 1e-300)
    on_hull = pts[:, 2] <= hull_vals + tol
    return faces, on_hull


def _projection_collinear(xy: np.ndarray) -> bool:
    d = xy - xy[0]
    scale = max(1.0, float(np.abs(d).max())) ** 2
    cross = np.abs(d[:, 0, None] * d[None, :, 1] - d[:, 1, None] * d[None, :, 0])
    return bool(np.max(cross) <= 1e-14 * scale)


def _qhull_lower_faces(pts: np.ndarray) -> np.ndarray:
    try:
        hull = ConvexHull(pts)
    except QhullError:
        # All lifted points coplanar: the hull is flat and any
        # triangulation of the projections realizes the lower surface.
        return _flat_triangulation(pts)
    normals = hull.equations[:, :3]
    down = normals[:, 2] < -_DOWN_TOL
    faces = hull.simplices[down]
    if len(faces) == 0:
        # Degenerate-flat can also slip through qhull with zero z-extent.
        return _flat_triangulation(pts)
    return faces


def _flat_triangulation(pts: np.ndarray) -> np.ndarray:
    try:
        tri = Delaunay(pts[:, :2])
    except QhullError as exc:
        raise DegenerateGeometryError("degenerate lifted points: " + str(exc)) from exc
    return tri.simplices


def _drop_sliver_faces(pts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Remove faces with numerically zero projected area.

    Near-vertical slivers can sneak past the downward-normal filter on
    rims of collinear projections; they carry no gradient information
    and would poison the plane fit.
    """
    from .geometry import cross2

    a = pts[faces[:, 0], :2]
    b = pts[faces[:, 1], :2]
    c = pts[faces[:, 2], :2]
    area2 = np.abs(cross2(b - a, c - a))
    scale = max(float(np.ptp(pts[:, 0])), float(np.ptp(pts[:, 1])), 1e-300)
    return faces[area2 > 1e-13 * scale ** 2]


def _orient_ccw(pts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    from .geometry import cross2

    a = pts[faces[:, 0], :2]
    b = pts[faces[:, 1], :2]
    c = pts[faces[:, 2], :2]
    cross = cross2(b - a, c - a)
    flip = cross < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces


def face_planes(pts: np.ndarray, faces: np.ndarray):
    """Gradient and offset of the affine function through each face.

    Returns ``(grads, offsets)`` with ``z = grads[f] . (x, y) + offsets[f]``
    on face ``f``.
    """
    p0 = pts[faces[:, 0]]
    p1 = pts[faces[:, 1]]
    p2 = pts[faces[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    gx = (d1[:, 2] * d2[:, 1] - d2[:, 2] * d1[:, 1]) / det
    gy = (d1[:, 0] * d2[:, 2] - d2[:, 0] * d1[:, 2]) / det
    grads = np.column_stack([gx, gy])
    offs = p0[:, 2] - gx * p0[:, 0] - gy * p0[:, 1]
    return grads, offs


def evaluate_max_planes(grads: np.ndarray, offs: np.ndarray, xy: np.ndarray,
                        chunk: int = 4096) -> np.ndarray:
    """Evaluate ``max_f (grads[f] . x + offs[f])`` at each query point.

    Every face plane supports the lower hull from below, so the maximum
    over planes reproduces the hull surface exactly inside the projected
    hull; evaluation never needs point location.
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    out = np.empty(len(xy))
    for s in range(0, len(xy), chunk):
        block = xy[s:s + chunk]
        out[s:s + chunk] = np.max(block @ grads.T + offs[None, :], axis=1)
    return out
