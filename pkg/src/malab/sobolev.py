"""Sampled Hessians, Sobolev-type distances, contact and pinch sets.

All second derivatives here are central differences of PL interpolants
sampled on a window grid strictly inside the domain.  The window spacing
is deliberately coarser than the mesh that produced the function, since
differencing at facet scale only measures the facets.
"""
from __future__ import annotations

import numpy as np

from .errors import GeometryError
from .geometry import ConvexPolygon
from .nodes import NodeSet
from .plconvex import (CONTACT_REL_TOL, PLConvexFunction, convex_envelope,
                       ma_measure)

# PSD slack for pinch tests on differenced data.
PSD_REL_TOL = 1e-8


class GridWindow:
    """Uniform sample grid on a subwindow compactly inside a domain.

    The margin between the window and the domain boundary must be at
    least ``2 h`` so every finite-difference stencil stays inside.
    """

    def __init__(self, window: ConvexPolygon, h: float, domain: ConvexPolygon = None):
        if h <= 0:
            raise GeometryError("window spacing must be positive")
        self.window = window
        self.h = float(h)
        self.domain = domain
        if domain is not None:
            self.margin = float(np.min(domain.boundary_distance(window.vertices)))
            if self.margin < 2 * self.h:
                raise GeometryError(
                    f"window margin {self.margin:.3g} is below 2h = {2 * self.h:.3g}")
        else:
            self.margin = None
        lo, hi = window.bounding_box()
        xs = np.arange(lo[0] + 0.5 * h, hi[0], h)
        ys = np.arange(lo[1] + 0.5 * h, hi[1], h)
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        keep = window.contains(pts) & (window.boundary_distance(pts) > 1e-12 * window.diameter())
        self.samples = pts[keep]
        if len(self.samples) == 0:
            raise GeometryError("window contains no sample points")
        self._node_set = None

    def area_covered(self) -> float:
        """Area represented by the samples (count times h^2)."""
        return len(self.samples) * self.h ** 2

    def node_set(self) -> NodeSet:
        """Samples as an all-interior node set on the window polygon."""
        if self._node_set is None:
            flags = np.zeros(len(self.samples), dtype=bool)
            self._node_set = NodeSet(self.window, self.samples, flags)
        return self._node_set


class HessianField:
    """Values, gradients and symmetric Hessians on a window's samples."""

    def __init__(self, window: GridWindow, values, grads, hxx, hxy, hyy):
        self.window = window
        self.values = np.asarray(values, dtype=float)
        self.grads = np.asarray(grads, dtype=float)
        self.hxx = np.asarray(hxx, dtype=float)
        self.hxy = np.asarray(hxy, dtype=float)
        self.hyy = np.asarray(hyy, dtype=float)
        for arr in (self.values, self.hxx, self.hxy, self.hyy):
            if not np.all(np.isfinite(arr)):
                raise GeometryError("Hessian field has non-finite entries")

    def frobenius(self) -> np.ndarray:
        return np.sqrt(self.hxx ** 2 + 2 * self.hxy ** 2 + self.hyy ** 2)

    def matrices(self) -> np.ndarray:
        out = np.empty((len(self.values), 2, 2))
        out[:, 0, 0] = self.hxx
        out[:, 0, 1] = out[:, 1, 0] = self.hxy
        out[:, 1, 1] = self.hyy
        return out

    def to_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "u", "ux", "uy", "uxx", "uxy", "uyy"])
        for p, v, g, a, b, c in zip(self.window.samples, self.values,
                                    self.grads, self.hxx, self.hxy, self.hyy):
            w.writerow([repr(float(t)) for t in (p[0], p[1], v, g[0], g[1], a, b, c)])
        return buf.getvalue()


def _check_same_samples(a: HessianField, b: HessianField):
    sa, sb = a.window.samples, b.window.samples
    if sa.shape != sb.shape or not np.allclose(sa, sb, rtol=0, atol=1e-12):
        raise GeometryError("Hessian fields live on different sample sets")
    if a.window.h != b.window.h:
        raise GeometryError("Hessian fields have different spacings")


def sample_hessian(u: PLConvexFunction, w: GridWindow) -> HessianField:
    """Central-difference derivatives of the PL interpolant on the window.

    The mixed derivative uses the four-point cross difference.  Stencil
    points must stay inside the domain the function lives on.
    """
    h = w.h
    pts = w.samples
    offsets = {
        "c": (0.0, 0.0), "e": (h, 0.0), "w": (-h, 0.0), "n": (0.0, h), "s": (0.0, -h),
        "ne": (h, h), "nw": (-h, h), "se": (h, -h), "sw": (-h, -h),
    }
    far = pts[:, None, :] + np.array(list(offsets.values()))[None, :, :]
    inside = u.nodes.domain.contains(far.reshape(-1, 2), tol=1e-12 * u.nodes.domain.diameter())
    if not np.all(inside):
        raise GeometryError("a finite-difference stencil leaves the domain")
    vals = {k: u.evaluate(pts + np.asarray(o)) for k, o in offsets.items()}
    value = vals["c"]
    grads = np.column_stack([(vals["e"] - vals["w"]) / (2 * h),
                             (vals["n"] - vals["s"]) / (2 * h)])
    hxx = (vals["e"] - 2 * value + vals["w"]) / h ** 2
    hyy = (vals["n"] - 2 * value + vals["s"]) / h ** 2
    hxy = (vals["ne"] - vals["se"] - vals["nw"] + vals["sw"]) / (4 * h ** 2)
    return HessianField(w, value, grads, hxx, hxy, hyy)


def w21_components(a: HessianField, b: HessianField):
    """Value, gradient and Hessian parts of the distance (see below)."""
    _check_same_samples(a, b)
    h2 = a.window.h ** 2
    dv = float(np.sum(np.abs(a.values - b.values)) * h2)
    dg = float(np.sum(np.linalg.norm(a.grads - b.grads, axis=1)) * h2)
    dh = float(np.sum(np.sqrt((a.hxx - b.hxx) ** 2 + 2 * (a.hxy - b.hxy) ** 2
                              + (a.hyy - b.hyy) ** 2)) * h2)
    return dv, dg, dh


def w21_distance(a: HessianField, b: HessianField) -> float:
    """Discrete full W^{2,1} distance between two fields.

    Sum over samples of |value gap| + |gradient gap|_2 + |Hessian gap|_F,
    scaled by h^2.
    """
    return float(sum(w21_components(a, b)))


def lgamma_hessian_norm(a: HessianField, gamma: float) -> float:
    """Integral gamma-norm of the Hessian magnitude over the window."""
    if not 1.0 <= gamma <= 4.0:
        raise ValueError("gamma must lie in [1, 4]")
    h2 = a.window.h ** 2
    return float(np.sum(a.frobenius() ** gamma * h2) ** (1.0 / gamma))


def contact_fraction(u: PLConvexFunction, u_k: PLConvexFunction, eps: float,
                     w: GridWindow, tau_rel: float = CONTACT_REL_TOL) -> float:
    """Fraction of window samples where ``u - (1-eps) u_k`` touches its
    convex envelope (the discrete relative measure of the contact set)."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    nodes = w.node_set()
    vals = u.evaluate(w.samples) - (1 - eps) * u_k.evaluate(w.samples)
    _, contact = convex_envelope(nodes, vals, tau_rel=tau_rel)
    return float(np.count_nonzero(contact)) / len(contact)


def psd_pinch_fraction(a: HessianField, b: HessianField, eps: float) -> float:
    """Fraction of samples where the two Hessians pinch each other.

    Both ``A - (1-eps) B`` and ``B/(1-eps) - A`` must be positive
    semidefinite up to a slack of ``1e-8`` times the largest entry.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    _check_same_samples(a, b)
    scale = max(float(np.max(np.abs(x))) for x in
                (a.hxx, a.hxy, a.hyy, b.hxx, b.hxy, b.hyy))
    tau = PSD_REL_TOL * max(scale, 1e-300)

    def min_eig(hxx, hxy, hyy):
        tr = hxx + hyy
        disc = np.sqrt((hxx - hyy) ** 2 + 4 * hxy ** 2)
        return 0.5 * (tr - disc)

    c1 = 1 - eps
    c2 = 1.0 / (1 - eps)
    e1 = min_eig(a.hxx - c1 * b.hxx, a.hxy - c1 * b.hxy, a.hyy - c1 * b.hyy)
    e2 = min_eig(c2 * b.hxx - a.hxx, c2 * b.hxy - a.hxy, c2 * b.hyy - a.hyy)
    ok = (e1 >= -tau) & (e2 >= -tau)
    return float(np.count_nonzero(ok)) / len(ok)


def envelope_difference_bound(u: PLConvexFunction, v: PLConvexFunction,
                              f, g, region: ConvexPolygon):
    """Envelope mass of u - v versus the density-gap bound on the region.

    Left: total Monge-Ampere mass of the convex envelope of the nodal
    difference at interior nodes inside the region.  Right: sum over
    contact-flagged nodes there of ``(sqrt f - sqrt g)^2`` times the
    dual-cell area.  Reports both sides; asserting the inequality is the
    caller's business.
    """
    if u.nodes is not v.nodes and not np.array_equal(u.nodes.points, v.nodes.points):
        raise GeometryError("functions live on different node sets")
    nodes = u.nodes
    diff = u.values - v.values
    env, contact = convex_envelope(nodes, diff)
    mu = ma_measure(PLConvexFunction(nodes, env))
    pts = nodes.points
    sel = ~nodes.boundary & region.contains(pts)
    lhs = float(mu.weights[sel].sum())
    areas = nodes.dual_areas()
    csel = sel & contact
    gap = (np.sqrt(f(pts[csel])) - np.sqrt(g(pts[csel]))) ** 2
    rhs = float(np.sum(gap * areas[csel]))
    return lhs, rhs


def envelope_measure_bound(values, hess_fn, nodes: NodeSet, region: ConvexPolygon):
    """Envelope mass versus the determinant bound on the contact set.

    For synthetic twice-differentiable data: left is the envelope's
    Monge-Ampere mass over interior region nodes, right integrates
    ``max(det D2 v, 0)`` over the contact-flagged ones.
    """
    vals = np.asarray(values, dtype=float)
    env, contact = convex_envelope(nodes, vals)
    mu = ma_measure(PLConvexFunction(nodes, env))
    pts = nodes.points
    sel = ~nodes.boundary & region.contains(pts)
    lhs = float(mu.weights[sel].sum())
    areas = nodes.dual_areas()
    csel = sel & contact
    hess = np.asarray(hess_fn(pts[csel]), dtype=float)
    det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] * hess[:, 1, 0]
    rhs = float(np.sum(np.maximum(det, 0.0) * areas[csel]))
    return lhs, rhs


def llogl_report(a: HessianField, b: HessianField, delta: float):
    """Diagnostic for the elementary bound t <= d t log(2+t) + e^(1/d).

    Applied to t = |Hessian gap|_F and integrated over the window;
    returns (integral of t, integrated right-hand side).
    """
    _check_same_samples(a, b)
    if delta <= 0:
        raise ValueError("delta must be positive")
    h2 = a.window.h ** 2
    t = np.sqrt((a.hxx - b.hxx) ** 2 + 2 * (a.hxy - b.hxy) ** 2
                + (a.hyy - b.hyy) ** 2)
    lhs = float(np.sum(t) * h2)
    rhs = float(delta * np.sum(t * np.log(2.0 + t)) * h2
                + np.exp(1.0 / delta) * a.window.area_covered())
    return lhs, rhs
