"""Alexandrov solver with zero Dirichlet data on a convex polygon.

Prescribes the Monge-Ampere mass of each interior node (the integral of
the density over its dual cell) and finds nodal values whose lower-hull
interpolant carries exactly those masses.  The iteration is a damped
Newton method on the value vector; the Jacobian follows from the fact
that face gradients are linear in the nodal values, so the motion of
each subdifferential polygon is exactly differentiable while the hull
combinatorics stay fixed.  A classical single-node lifting sweep backs
Newton up when a step cannot be accepted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import spsolve

from .density import DensitySpec
from .errors import GeometryError, NonConvergenceError, SingularJacobianError
from .geometry import ConvexPolygon, polygon_integrate, shoelace_area
from .hull import face_planes, lower_hull_3d
from .nodes import NodeSet
from .plconvex import AtomicMeasure, PLConvexFunction, halfplane_subdifferential


@dataclass
class SolverOptions:
    """Iteration controls.

    newton_tol is the relative per-node mass residual target;
    quadrature_order is the points-per-triangle rule used for dual-cell
    masses (refined adaptively until the cell integral stabilizes).
    """
    newton_tol: float = 1e-7
    max_iter: int = 60
    damping: float = 1.0
    quadrature_order: int = 3

    def __post_init__(self):
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


def cell_masses(f: DensitySpec, nodes: NodeSet, order: int = 3,
                rel_tol: float = 1e-9) -> AtomicMeasure:
    """Integral of the density over each dual cell.

    Cells are fan-triangulated from their centroid and integrated with
    the fixed-order base rule, subdividing adaptively within a global
    relative budget so the total matches the true domain integral well
    inside 1e-8 for smooth densities.
    """
    from .geometry import integrate_triangles, polygon_triangles

    tri_blocks, owners = [], []
    for i, cell in enumerate(nodes.dual_cells()):
        if cell is None:
            continue
        tris = polygon_triangles(cell)
        tri_blocks.append(tris)
        owners.append(np.full(len(tris), i))
    vals = integrate_triangles(f, np.vstack(tri_blocks), order=order, rel_tol=rel_tol)
    weights = np.zeros(len(nodes))
    np.add.at(weights, np.concatenate(owners), vals)
    return AtomicMeasure(nodes, weights)


class _HullState:
    """Masses and mass Jacobian of the current value vector."""

    def __init__(self, nodes: NodeSet, values: np.ndarray):
        self.values = values
        pts = nodes.points
        lifted = np.column_stack([pts, values])
        faces, _ = lower_hull_3d(lifted)
        grads, _ = face_planes(lifted, faces)
        self.int_idx = nodes.interior_indices
        pos_of = -np.ones(len(pts), dtype=int)
        pos_of[self.int_idx] = np.arange(len(self.int_idx))

        # Per-face linear dependence of the gradient on its vertex values:
        # g = ginv @ (u_q - u_p, u_r - u_p).
        p0, p1, p2 = pts[faces[:, 0]], pts[faces[:, 1]], pts[faces[:, 2]]
        d1, d2 = p1 - p0, p2 - p0
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        # Columns of the inverse of [[d1], [d2]].
        c1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
        c2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
        dg = np.stack([-(c1 + c2), c1, c2], axis=1)  # (m, 3 vertices, 2)

        incident = [[] for _ in range(len(pts))]
        for fi, face in enumerate(faces):
            for v in face:
                incident[v].append(fi)
        centroids = (p0 + p1 + p2) / 3.0

        n_int = len(self.int_idx)
        mu = np.zeros(len(pts))
        rows, cols, vals = [], [], []
        for i in self.int_idx:
            fs = incident[i]
            if len(fs) < 3:
                continue
            ang = np.arctan2(centroids[fs][:, 1] - pts[i, 1],
                             centroids[fs][:, 0] - pts[i, 0])
            fs = [fs[k] for k in np.argsort(ang)]
            g = grads[fs]
            m = len(fs)
            area = 0.5 * float(np.sum(g[:, 0] * np.roll(g[:, 1], -1)
                                      - g[:, 1] * np.roll(g[:, 0], -1)))
            mu[i] = max(area, 0.0)
            row_i = pos_of[i]
            for k, fi in enumerate(fs):
                gn = g[(k + 1) % m]
                gp = g[(k - 1) % m]
                darea = 0.5 * np.array([gn[1] - gp[1], -(gn[0] - gp[0])])
                for slot, v in enumerate(faces[fi]):
                    col = pos_of[v]
                    if col < 0:
                        continue  # boundary value is fixed
                    rows.append(row_i)
                    cols.append(col)
                    vals.append(float(darea @ dg[fi, slot]))
        self.mu = mu
        self.jac = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(n_int, n_int))

    def residual(self, targets: np.ndarray) -> np.ndarray:
        return self.mu[self.int_idx] - targets[self.int_idx]


def solver_residual(u: PLConvexFunction, targets: AtomicMeasure) -> np.ndarray:
    """Per-node signed mass mismatch, nodal measure minus target."""
    if targets.nodes is not u.nodes and not (
        len(targets.nodes) == len(u.nodes)
        and np.array_equal(targets.nodes.points, u.nodes.points)
    ):
        raise GeometryError("targets live on a different node set")
    from .plconvex import ma_measure

    return ma_measure(u).weights - targets.weights


def _initial_values(domain: ConvexPolygon, nodes: NodeSet, total_mass: float) -> np.ndarray:
    center, radius = domain.chebyshev_center()
    alpha = np.sqrt(total_mass / (np.pi * radius ** 2))
    # Offset by the farthest node so every interior value starts strictly
    # negative and the initial surface is a hull with all nodes as vertices.
    r2 = np.sum((nodes.points - center) ** 2, axis=1)
    r2_max = float(r2.max())
    values = 0.5 * alpha * (r2 - r2_max)
    values[nodes.boundary] = 0.0
    return values


def _op_sweep(nodes: NodeSet, values: np.ndarray, targets: np.ndarray,
              rel_tol: float) -> np.ndarray:
    """One lifting sweep: per-node 1D solve of cell area against target.

    The half-plane form of the subdifferential makes the node's own
    value a cheap 1D parameter; its cell area is continuous and
    nonincreasing in that value, so bisection is safe.
    """
    pts = nodes.points
    values = values.copy()

    def area_at(i, t):
        cell = halfplane_subdifferential(pts, values, i, value_i=t)
        if len(cell) < 3:
            return 0.0
        return abs(shoelace_area(cell))

    scale = max(float(np.ptp(values)), 1e-12)
    for i in nodes.interior_indices:
        m_i = targets[i]
        t = values[i]
        a = area_at(i, t)
        if abs(a - m_i) <= rel_tol * m_i:
            continue
        step = 0.25 * scale
        if a > m_i:
            lo = t
            hi = t + step
            while area_at(i, hi) > m_i:
                lo = hi
                hi += step
                step *= 2.0
        else:
            hi = t
            lo = t - step
            while area_at(i, lo) < m_i:
                hi = lo
                lo -= step
                step *= 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if area_at(i, mid) > m_i:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-14 * scale:
                break
        values[i] = 0.5 * (lo + hi)
    return values


def solve_prescribed_masses(nodes: NodeSet, targets: AtomicMeasure,
                            opts: SolverOptions = None,
                            domain: ConvexPolygon = None) -> PLConvexFunction:
    """Find the PL convex function with the prescribed nodal masses.

    Boundary values are zero; interior values are the unknowns.  Raises
    ``NonConvergenceError`` past the iteration cap and
    ``SingularJacobianError`` when factorization fails after the one
    permitted regularization retry.
    """
    opts = opts or SolverOptions()
    domain = domain or nodes.domain
    int_idx = nodes.interior_indices
    m = targets.weights
    if np.any(m[int_idx] <= 0):
        bad = int(int_idx[np.argmin(m[int_idx])])
        raise GeometryError(f"nonpositive target mass at node {bad}")

    values = _initial_values(domain, nodes, float(m.sum()))
    state = _HullState(nodes, values)
    res = state.residual(m)

    def scaled_norm(r):
        return float(np.linalg.norm(r / m[int_idx]))

    def rel_err(r):
        return float(np.max(np.abs(r) / m[int_idx]))

    norm = scaled_norm(res)
    for _ in range(opts.max_iter):
        if rel_err(res) <= opts.newton_tol:
            return PLConvexFunction(nodes, values)
        delta = _newton_direction(state, res)
        alpha = opts.damping
        accepted = False
        while alpha >= 1e-8:
            trial = values.copy()
            trial[int_idx] += alpha * delta
            tstate = _HullState(nodes, trial)
            tres = tstate.residual(m)
            tnorm = scaled_norm(tres)
            # A step is acceptable only if it reduces the residual AND
            # keeps every interior node a hull vertex (positive mass);
            # off-hull nodes would zero out their Jacobian rows.
            if (np.isfinite(tnorm) and tnorm < norm
                    and float(tstate.mu[int_idx].min()) > 0.0):
                values, state, res, norm = trial, tstate, tres, tnorm
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            values = _op_sweep(nodes, values, m, rel_tol=0.1 * opts.newton_tol)
            state = _HullState(nodes, values)
            res = state.residual(m)
            norm = scaled_norm(res)
    if rel_err(res) <= opts.newton_tol:
        return PLConvexFunction(nodes, values)
    raise NonConvergenceError(
        f"no convergence in {opts.max_iter} iterations"
        f" (relative residual {rel_err(res):.3e})",
        residual=rel_err(res),
    )


def _newton_direction(state: _HullState, res: np.ndarray) -> np.ndarray:
    jac = state.jac
    try:
        delta = spsolve(jac.tocsc(), -res)
        if np.all(np.isfinite(delta)):
            return delta
    except Exception:
        pass
    diag = jac.diagonal()
    shift = 1e-12 * float(diag.sum())
    if shift == 0.0:
        shift = -1e-12
    reg = (jac + shift * sparse.eye(jac.shape[0], format="csr")).tocsc()
    try:
        delta = spsolve(reg, -res)
    except Exception as exc:
        node = int(state.int_idx[np.argmin(np.abs(diag))])
        raise SingularJacobianError(
            f"Jacobian singular even after regularization near node {node}",
            node=node,
        ) from exc
    if not np.all(np.isfinite(delta)):
        node = int(state.int_idx[np.argmin(np.abs(diag))])
        raise SingularJacobianError(
            f"Jacobian solve produced non-finite update near node {node}",
            node=node,
        )
    return delta


def solve_dirichlet(domain: ConvexPolygon, f: DensitySpec, nodes: NodeSet,
                    opts: SolverOptions = None) -> PLConvexFunction:
    """Solve the prescribed-determinant problem with zero boundary data.

    Targets are the density's dual-cell masses; the result is PL convex,
    zero on the boundary nodes and strictly negative inside, with every
    nodal mass within ``newton_tol`` of its target in relative terms.
    """
    opts = opts or SolverOptions()
    targets = cell_masses(f, nodes, order=opts.quadrature_order)
    return solve_prescribed_masses(nodes, targets, opts, domain=domain)
