"""Piecewise-linear convex functions and their Monge-Ampere measures.

A PL convex function is the lower convex hull of lifted nodes.  Its
subdifferential at an interior hull vertex is the convex hull of the
gradients of the incident faces; the area of that polygon is the atomic
Monge-Ampere mass carried by the node.
"""
from __future__ import annotations

import numpy as np

from .errors import GeometryError
from .geometry import ConvexPolygon, shoelace_area, clip_tagged
from .hull import lower_hull_3d, face_planes, evaluate_max_planes
from .nodes import NodeSet

# Contact tolerance for envelopes: relative to the value range, floored.
CONTACT_REL_TOL = 1e-9
CONTACT_ABS_FLOOR = 1e-14


class AtomicMeasure:
    """Nonnegative weights on nodes; boundary nodes always carry zero."""

    def __init__(self, nodes: NodeSet, weights):
        self.nodes = nodes
        self.weights = np.asarray(weights, dtype=float)
        if len(self.weights) != len(nodes):
            raise GeometryError("weights must align with the node set")
        if np.any(self.weights < 0):
            raise GeometryError("atomic measure has a negative weight")
        if np.any(self.weights[nodes.boundary] != 0):
            raise GeometryError("boundary nodes cannot carry mass")
        if not np.all(np.isfinite(self.weights)):
            raise GeometryError("atomic measure has non-finite weights")

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def mass_in(self, region: ConvexPolygon) -> float:
        """Sum of weights at nodes inside the region (closed)."""
        inside = region.contains(self.nodes.points)
        return float(self.weights[inside].sum())


class PLConvexFunction:
    """Lower-hull interpolant of nodal values.

    Attributes
    ----------
    nodes, values : the defining data
    faces : (m, 3) lower-hull triangles (CCW in projection)
    face_grads, face_offsets : per-face affine data, z = g.x + c
    on_hull : per-node flag, True when the value sits on the hull surface
    """

    def __init__(self, nodes: NodeSet, values):
        self.nodes = nodes
        self.values = np.asarray(values, dtype=float)
        if len(self.values) != len(nodes):
            raise GeometryError("values must align with the node set")
        if not np.all(np.isfinite(self.values)):
            raise GeometryError("nodal values must be finite")
        lifted = np.column_stack([nodes.points, self.values])
        self.faces, self.on_hull = lower_hull_3d(lifted)
        self.face_grads, self.face_offsets = face_planes(lifted, self.faces)
        self._incident = None

    def incident_faces(self):
        """List of incident lower-hull face indices per node."""
        if self._incident is None:
            inc = [[] for _ in range(len(self.nodes))]
            for fi, face in enumerate(self.faces):
                for v in face:
                    inc[v].append(fi)
            self._incident = inc
        return self._incident

    def evaluate(self, points) -> np.ndarray:
        return evaluate_max_planes(self.face_grads, self.face_offsets, points)

    def supporting_gradient(self, point) -> np.ndarray:
        """Gradient of a face attaining the maximum at the point."""
        p = np.asarray(point, dtype=float)
        vals = self.face_grads @ p + self.face_offsets
        return self.face_grads[int(np.argmax(vals))].copy()

    def validate(self, tol_scale: float = 1e-10):
        """Check the structural convexity invariants; raises on failure.

        Across every interior hull edge the gradient jump must point with
        the edge normal, values at hull vertices must coincide with the
        inputs, and non-hull values must sit above the interpolant.
        """
        pts = self.nodes.points
        edge_faces = {}
        for fi, face in enumerate(self.faces):
            for a, b in ((face[0], face[1]), (face[1], face[2]), (face[2], face[0])):
                edge_faces.setdefault((min(a, b), max(a, b)), []).append(fi)
        gscale = max(1.0, float(np.abs(self.face_grads).max()))
        for (a, b), fs in edge_faces.items():
            if len(fs) != 2:
                continue
            f1, f2 = fs
            third = [v for v in self.faces[f2] if v != a and v != b][0]
            d = pts[b] - pts[a]
            n = np.array([-d[1], d[0]])
            if n @ (pts[third] - pts[a]) < 0:
                n = -n
            n /= np.linalg.norm(n)
            jump = (self.face_grads[f2] - self.face_grads[f1]) @ n
            if jump < -tol_scale * gscale:
                raise GeometryError(f"gradient jump across edge ({a},{b}) violates convexity")
        interp = self.evaluate(pts)
        vrange = max(float(np.ptp(self.values)), 1e-300)
        if np.max(np.abs(interp[self.on_hull] - self.values[self.on_hull])) > 1e-9 * vrange:
            raise GeometryError("hull-vertex value does not match the interpolant")
        if np.min(self.values - interp) < -1e-9 * vrange:
            raise GeometryError("a nodal value lies below the hull interpolant")


def ma_measure(f: PLConvexFunction) -> AtomicMeasure:
    """Monge-Ampere measure of a PL convex function, atomic at nodes.

    The weight at an interior node is the area of the convex hull of the
    incident lower-face gradients, i.e. the Lebesgue measure of the
    subdifferential there.  Nodes that are not lower-hull vertices (and
    all boundary nodes) carry zero.
    """
    weights = np.zeros(len(f.nodes))
    incident = f.incident_faces()
    for i in f.nodes.interior_indices:
        faces_i = incident[i]
        if len(faces_i) < 3:
            continue
        hull = convex_hull_2d(f.face_grads[faces_i])
        if hull is not None:
            weights[i] = shoelace_area(hull)
    return AtomicMeasure(f.nodes, weights)


def subdifferential_cell(f: PLConvexFunction, node_index: int):
    """Subdifferential polygon at an interior node, or None when flat.

    The area of the returned polygon equals the ``ma_measure`` weight.
    A node with fewer than 3 incident faces, or with collinear incident
    gradients, has a degenerate (zero-area) subdifferential and yields
    None rather than an error.
    """
    if f.nodes.boundary[node_index]:
        raise GeometryError("subdifferential cells are defined at interior nodes")
    faces_i = f.incident_faces()[node_index]
    if len(faces_i) < 3:
        return None
    hull = convex_hull_2d(f.face_grads[faces_i])
    if hull is None:
        return None
    try:
        return ConvexPolygon(hull)
    except GeometryError:
        return None


def halfplane_subdifferential(points, values, i, value_i=None):
    """Exact subdifferential cell by half-plane intersection.

    For the lower-hull interpolant of ``(points, values)`` the
    subdifferential at node i is ``{p : p.(x_j - x_i) <= v_j - v_i}``
    over all other nodes j.  This is an independent route to the same
    polygon as the incident-face construction; the solver's sweep uses
    it because the node's own value can be varied cheaply.

    Returns the polygon vertex array (possibly empty).
    """
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    t = vals[i] if value_i is None else float(value_i)
    d = pts - pts[i]
    rhs = vals - t
    keep = np.ones(len(pts), dtype=bool)
    keep[i] = False
    dn = np.linalg.norm(d, axis=1)
    keep &= dn > 0
    d, rhs, dn = d[keep], rhs[keep], dn[keep]
    slack = rhs / dn
    order = np.argsort(slack)
    box = 4.0 * float(np.max(np.abs(slack))) + 1.0
    for _ in range(8):
        verts = np.array([[-box, -box], [box, -box], [box, box], [-box, box]])
        tags = [None] * 4
        radius = box * np.sqrt(2.0)
        for j in order:
            if slack[j] >= radius:
                break
            verts, tags = clip_tagged(verts, tags, d[j], rhs[j], None)
            if len(verts) < 3:
                return np.empty((0, 2))
            radius = float(np.max(np.linalg.norm(verts, axis=1)))
        if np.max(np.abs(verts)) < box * (1 - 1e-9):
            return verts
        box *= 4.0
    raise GeometryError("subdifferential cell did not close; values are not convex-compatible")


def convex_hull_2d(points: np.ndarray):
    """Monotone-chain hull; returns CCW vertices or None if degenerate."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return None
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                d1 = out[-1] - out[-2]
                d2 = p - out[-2]
                if d1[0] * d2[1] - d1[1] * d2[0] <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    hull = np.asarray(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        return None
    return hull


def convex_envelope(nodes: NodeSet, values, tau_rel: float = CONTACT_REL_TOL):
    """Convex envelope of nodal values and the contact flags.

    The envelope is the lower hull of the lifted graph points evaluated
    back at the nodes; contact holds where the value sits on it within a
    tolerance of ``tau_rel`` times the value range (floored at 1e-14).
    """
    vals = np.asarray(values, dtype=float)
    lifted = np.column_stack([nodes.points, vals])
    faces, _ = lower_hull_3d(lifted)
    grads, offs = face_planes(lifted, faces)
    env = evaluate_max_planes(grads, offs, nodes.points)
    env = np.minimum(env, vals)
    tau = max(tau_rel * float(np.ptp(vals)), CONTACT_ABS_FLOOR)
    contact = (vals - env) <= tau
    return env, contact
