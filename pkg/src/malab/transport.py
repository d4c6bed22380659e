"""Semi-discrete optimal transport for quadratic cost.

The Brenier potential of a semi-discrete problem is max-affine,
``u(x) = max_j (x . y_j - psi_j)``; its gradient regions are the
Laguerre cells of the dual weights.  Cells are built by clipping the
source domain with the half-planes of the lower-hull neighbors of each
lifted target, which is exact and keeps the work linear in the number
of adjacencies.  The dual weights are found by a damped Newton method
on the cell masses with a gradient-descent fallback when cells empty.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import spsolve

from .density import DensitySpec
from .errors import (EmptyCellError, GeometryError, NonConvergenceError,
                     SectionError)
from .geometry import (ConvexPolygon, clip_tagged, integrate_triangles,
                       polygon_integrate, polygon_triangles, rectangle,
                       segment_integrate)
from .hull import lower_hull_3d
from .nodes import NodeSet, boundary_nodes
from .plconvex import PLConvexFunction


class TargetCloud:
    """Weighted target points; masses must match the source mass."""

    def __init__(self, points, masses):
        self.points = np.asarray(points, dtype=float)
        self.masses = np.asarray(masses, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise GeometryError("target points must be an (m, 2) array")
        if len(self.points) != len(self.masses):
            raise GeometryError("points and masses disagree in length")
        if np.any(self.masses <= 0):
            raise GeometryError("target masses must be positive")
        d = np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if np.min(d) <= 0:
            raise GeometryError("target points must be distinct")

    def __len__(self):
        return len(self.points)

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def check_compatible(self, source_mass: float, rel_tol: float = 1e-10):
        gap = abs(self.total_mass() - source_mass) / source_mass
        if gap > rel_tol:
            raise GeometryError(
                f"target mass {self.total_mass():.12g} does not match source"
                f" mass {source_mass:.12g} (rel gap {gap:.2e})")


class BrenierPotential:
    """Max-affine potential ``u(x) = max_j (x . y_j - psi_j)``.

    The dual weights are gauged so ``psi[0] == 0``; the induced function
    is convex automatically.  The transport map is the argmax target.
    """

    def __init__(self, targets: TargetCloud, psi, domain: ConvexPolygon = None):
        self.targets = targets
        self.psi = np.asarray(psi, dtype=float)
        if len(self.psi) != len(targets):
            raise GeometryError("dual weights must align with the targets")
        self.domain = domain

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.max(pts @ self.targets.points.T - self.psi[None, :], axis=1)

    def argmax_indices(self, points) -> np.ndarray:
        """Index of the winning target per point; ties break to the
        lowest index (numpy argmax takes the first maximum)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.argmax(pts @ self.targets.points.T - self.psi[None, :], axis=1)

    def supporting_gradient(self, point) -> np.ndarray:
        return self.targets.points[int(self.argmax_indices(point)[0])].copy()


def transport_map_eval(pot: BrenierPotential, x) -> np.ndarray:
    """Image of one source point under the semi-discrete Brenier map."""
    p = np.asarray(x, dtype=float)
    if pot.domain is not None and not pot.domain.contains_point(
            p, tol=1e-12 * pot.domain.diameter()):
        raise GeometryError(f"point {p.tolist()} is outside the source domain")
    return pot.targets.points[int(pot.argmax_indices(p)[0])].copy()


def transport_map(pot: BrenierPotential, points) -> np.ndarray:
    """Vectorized map evaluation (no domain check)."""
    return pot.targets.points[pot.argmax_indices(points)]


class LaguerreDiagram:
    """Clipped Laguerre cells with masses and tagged edges."""

    def __init__(self, cells, edge_tags, masses):
        self.cells = cells          # list of ConvexPolygon or None
        self.edge_tags = edge_tags  # per cell: neighbor index or None per edge
        self.masses = np.asarray(masses, dtype=float)

    def nonempty(self) -> np.ndarray:
        return np.array([c is not None for c in self.cells])

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def check_tiling(self, domain: ConvexPolygon, rel_tol: float = 1e-8) -> float:
        areas = sum(c.area() for c in self.cells if c is not None)
        gap = abs(areas - domain.area()) / domain.area()
        if gap > rel_tol:
            raise GeometryError(f"Laguerre cells do not tile the domain (rel gap {gap:.2e})")
        return gap


def _adjacency(targets: np.ndarray, psi: np.ndarray):
    """Neighbor lists from the lower hull of the lifted targets."""
    m = len(targets)
    if m == 1:
        return [[]]
    if m == 2:
        return [[1], [0]]
    lifted = np.column_stack([targets, psi])
    faces, _ = lower_hull_3d(lifted)
    nbrs = [set() for _ in range(m)]
    for a, b, c in faces:
        nbrs[a].update((b, c))
        nbrs[b].update((a, c))
        nbrs[c].update((a, b))
    return [sorted(s) for s in nbrs]


def laguerre_diagram(pot: BrenierPotential, domain: ConvexPolygon,
                     f: DensitySpec, mass_rel_tol: float = 1e-9) -> LaguerreDiagram:
    """Laguerre cells of the potential clipped to the source domain.

    Cell j is ``{x : x.y_j - psi_j >= x.y_i - psi_i for all i}``; only
    the lower-hull neighbors of the lifted target can contribute a
    binding half-plane, so the clipping is linear in the adjacency size.
    Masses integrate the source density over each cell.
    """
    y = pot.targets.points
    psi = pot.psi
    m = len(y)
    nbr = _adjacency(y, psi)
    cells, tags = [], []
    for j in range(m):
        if m > 1 and not nbr[j]:
            cells.append(None)
            tags.append(None)
            continue
        verts = domain.vertices
        etags = [None] * len(verts)
        dead = False
        for i in nbr[j]:
            normal = y[i] - y[j]
            offset = psi[i] - psi[j]
            verts, etags = clip_tagged(verts, etags, normal, offset, i)
            if len(verts) < 3:
                dead = True
                break
        if dead:
            cells.append(None)
            tags.append(None)
            continue
        try:
            cells.append(ConvexPolygon(verts))
            tags.append(etags)
        except GeometryError:
            cells.append(None)
            tags.append(None)
    masses = np.zeros(m)
    tri_blocks, owners = [], []
    for j, cell in enumerate(cells):
        if cell is not None:
            tris = polygon_triangles(cell)
            tri_blocks.append(tris)
            owners.append(np.full(len(tris), j))
    if tri_blocks:
        vals = integrate_triangles(f, np.vstack(tri_blocks), order=6,
                                   rel_tol=mass_rel_tol)
        np.add.at(masses, np.concatenate(owners), vals)
    return LaguerreDiagram(cells, tags, masses)


def _mass_jacobian(diagram: LaguerreDiagram, y: np.ndarray, f: DensitySpec):
    """Sparse ``d mass_j / d psi_i`` from tagged cell edges."""
    m = len(y)
    rows, cols, vals = [], [], []
    diag = np.zeros(m)
    for j, cell in enumerate(diagram.cells):
        if cell is None:
            continue
        verts = cell.vertices
        etags = diagram.edge_tags[j]
        for k, tag in enumerate(etags):
            if tag is None:
                continue
            a = verts[k]
            b = verts[(k + 1) % len(verts)]
            w = segment_integrate(f, a, b) / np.linalg.norm(y[tag] - y[j])
            rows.append(j)
            cols.append(tag)
            vals.append(w)
            diag[j] -= w
    rows += list(range(m))
    cols += list(range(m))
    vals += list(diag)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))


def _dual_energy(diagram: LaguerreDiagram, pot: BrenierPotential, f: DensitySpec,
                 g: np.ndarray) -> float:
    """Convex objective whose minimum prescribes the cell masses."""
    total = float(np.dot(g, pot.psi))
    y = pot.targets.points
    for j, cell in enumerate(diagram.cells):
        if cell is None:
            continue
        m1x = polygon_integrate(lambda p: f(p) * p[:, 0], cell, order=6, rel_tol=1e-9)
        m1y = polygon_integrate(lambda p: f(p) * p[:, 1], cell, order=6, rel_tol=1e-9)
        total += y[j, 0] * m1x + y[j, 1] * m1y - pot.psi[j] * diagram.masses[j]
    return total


def solve_semidiscrete(f: DensitySpec, domain: ConvexPolygon,
                       targets: TargetCloud, tol: float = 1e-7,
                       max_iter: int = 80) -> BrenierPotential:
    """Dual weights matching every Laguerre-cell mass to its target.

    Damped Newton on the mass residual; a step is accepted only if the
    residual norm drops and no cell with positive target mass falls
    under the empty-cell guard.  When Newton cannot move, a few
    backtracking gradient steps on the dual objective are taken instead.
    Raises ``EmptyCellError`` or ``NonConvergenceError`` on failure.
    """
    y = targets.points
    g = targets.masses
    source_mass = f.integrate(domain)
    targets.check_compatible(source_mass)
    m = len(y)
    if m == 1:
        return BrenierPotential(targets, np.zeros(1), domain=domain)

    shift = _centroid(y) - domain.centroid()
    psi = 0.5 * np.sum((y - shift) ** 2, axis=1)
    psi -= psi[0]
    pot = BrenierPotential(targets, psi, domain=domain)
    diagram = laguerre_diagram(pot, domain, f)
    if np.any(diagram.masses <= 0):
        raise EmptyCellError("initial Voronoi-style diagram has an empty cell")
    guard = 0.5 * min(float(diagram.masses.min()), float(g.min()))
    res = diagram.masses - g
    norm = float(np.linalg.norm(res))

    for _ in range(max_iter):
        if float(np.max(np.abs(res) / g)) <= tol:
            return pot
        jac = _mass_jacobian(diagram, y, f)
        red = jac[1:, 1:].tocsc()
        try:
            delta = np.concatenate([[0.0], spsolve(red, -res[1:])])
        except Exception:
            reg = (red + 1e-14 * sparse.eye(m - 1, format="csr")).tocsc()
            delta = np.concatenate([[0.0], spsolve(reg, -res[1:])])
        if not np.all(np.isfinite(delta)):
            raise NonConvergenceError("dual Newton direction is not finite",
                                      residual=norm)
        alpha, accepted = 1.0, False
        while alpha >= 1e-6:
            trial = BrenierPotential(targets, psi + alpha * delta, domain=domain)
            tdiag = laguerre_diagram(trial, domain, f)
            tres = tdiag.masses - g
            tnorm = float(np.linalg.norm(tres))
            if float(tdiag.masses.min()) >= guard and tnorm < norm:
                psi, pot, diagram, res, norm = trial.psi, trial, tdiag, tres, tnorm
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            psi, pot, diagram, res, norm = _gradient_rescue(
                f, domain, targets, psi, diagram, res, norm, guard)
    if float(np.max(np.abs(res) / g)) <= tol:
        return pot
    raise NonConvergenceError(
        f"dual ascent did not reach tolerance {tol:g}"
        f" (max relative residual {float(np.max(np.abs(res) / g)):.3e})",
        residual=float(np.max(np.abs(res) / g)))


def _gradient_rescue(f, domain, targets, psi, diagram, res, norm, guard,
                     max_tries: int = 40):
    """Armijo-backtracked descent step on the dual energy.

    The descent direction is ``mass - g``; used when a Newton step keeps
    emptying cells or fails to reduce the residual.
    """
    g = targets.masses
    energy = _dual_energy(diagram, BrenierPotential(targets, psi, domain=domain), f, g)
    slope = float(np.dot(res, res))
    t = 1.0 / max(float(np.max(np.abs(res))), 1e-30)
    for _ in range(max_tries):
        trial_psi = psi + t * res
        trial_psi = trial_psi - trial_psi[0]
        trial = BrenierPotential(targets, trial_psi, domain=domain)
        tdiag = laguerre_diagram(trial, domain, f)
        tres = tdiag.masses - g
        tnorm = float(np.linalg.norm(tres))
        tenergy = _dual_energy(tdiag, trial, f, g)
        if (float(tdiag.masses.min()) >= guard
                and tenergy <= energy - 1e-4 * t * slope):
            return trial_psi, trial, tdiag, tres, tnorm
        t *= 0.5
    raise EmptyCellError(
        "a Laguerre cell kept collapsing; gradient rescue exhausted its retries")


def _centroid(points: np.ndarray) -> np.ndarray:
    return points.mean(axis=0)


def quantize_density(g: DensitySpec, domain: ConvexPolygon, n: int,
                     total_mass: float = None, grid_offset=(0.0, 0.0)) -> TargetCloud:
    """Quantize a density on an n-by-n grid over the domain.

    Each grid cell clipped to the domain becomes one target at the
    clipped cell's centroid, weighted by the cell's integral of g.
    ``grid_offset`` (in cell fractions) shifts the grid, which is how an
    independent re-quantization of the same density is produced.
    ``total_mass`` rescales the weights exactly (source compatibility).
    """
    lo, hi = domain.bounding_box()
    w = (hi - lo) / n
    off = np.asarray(grid_offset, dtype=float) * w
    points, masses = [], []
    for i in range(-1, n + 1):
        for j in range(-1, n + 1):
            a = lo + np.array([i * w[0], j * w[1]]) + off
            b = a + w
            cell = rectangle(a, b).intersect(domain)
            if cell is None or cell.area() < 1e-12 * domain.area():
                continue
            mass = polygon_integrate(g, cell, order=6, rel_tol=1e-10)
            if mass <= 0:
                continue
            points.append(cell.centroid())
            masses.append(mass)
    masses = np.asarray(masses)
    if total_mass is not None:
        masses = masses * (total_mass / masses.sum())
    return TargetCloud(np.asarray(points), masses)


def density_ratio_l1(f_k, g_k, pot_k: BrenierPotential, f, g, pot: BrenierPotential,
                     domain: ConvexPolygon, sample_h: float) -> float:
    """Sampled L1 gap between the two transported density ratios.

    Integrand: ``|f_k(x)/g_k(T_k x) - f(x)/g(T x)|`` on a uniform grid
    in the source domain; the compositions evaluate the continuous
    target densities at the mapped points.
    """
    pts = domain.grid_points(sample_h, inset=1e-12 * domain.diameter())
    tk = transport_map(pot_k, pts)
    t0 = transport_map(pot, pts)
    ratio_k = f_k(pts) / g_k(tk)
    ratio_0 = f(pts) / g(t0)
    return float(np.sum(np.abs(ratio_k - ratio_0)) * sample_h ** 2)


def _tent_offsets(sigma: float, per_side: int = 4):
    """Midpoint discretization of the 2D tent kernel on [-s, s]^2."""
    n = 2 * per_side
    step = 2 * sigma / n
    ts = -sigma + (np.arange(n) + 0.5) * step
    w1 = (1.0 - np.abs(ts) / sigma)
    offs = np.array([[a, b] for a in ts for b in ts])
    wts = np.array([wa * wb for wa in w1 for wb in w1])
    return offs, wts / wts.sum()


def _mollified_hessian(pot: BrenierPotential, samples: np.ndarray, h: float,
                       sigma: float):
    offs, wts = _tent_offsets(sigma)

    def smooth(pts):
        acc = np.zeros(len(pts))
        for o, w in zip(offs, wts):
            acc += w * pot.evaluate(pts + o)
        return acc

    e = np.array([h, 0.0])
    n = np.array([0.0, h])
    c = smooth(samples)
    hxx = (smooth(samples + e) - 2 * c + smooth(samples - e)) / h ** 2
    hyy = (smooth(samples + n) - 2 * c + smooth(samples - n)) / h ** 2
    hxy = (smooth(samples + e + n) - smooth(samples + e - n)
           - smooth(samples - e + n) + smooth(samples - e - n)) / (4 * h ** 2)
    return hxx, hxy, hyy


def map_w11_distance(pot_k: BrenierPotential, pot: BrenierPotential,
                     window, sigma: float) -> float:
    """Discrete W^{1,1} distance between two semi-discrete maps.

    The zero-order term sums the pointwise map gap; the gradient term
    differences the tent-mollified potential Hessians (the raw maps are
    piecewise constant, so mollification at width sigma >= 2h is
    mandatory before differencing).
    """
    h = window.h
    if sigma < 2 * h:
        raise GeometryError(f"mollification width {sigma:g} is below 2h = {2 * h:g}")
    pts = window.samples
    gap = np.linalg.norm(transport_map(pot_k, pts) - transport_map(pot, pts), axis=1)
    term1 = float(np.sum(gap) * h ** 2)
    kxx, kxy, kyy = _mollified_hessian(pot_k, pts, h, sigma)
    oxx, oxy, oyy = _mollified_hessian(pot, pts, h, sigma)
    frob = np.sqrt((kxx - oxx) ** 2 + 2 * (kxy - oxy) ** 2 + (kyy - oyy) ** 2)
    term2 = float(np.sum(frob) * h ** 2)
    return term1 + term2


def extract_section(u, x0, b: float, mesh_n: int = 17):
    """Sublevel section of a convex function under a tilted support plane.

    The cutting function is the supporting affine function at ``x0``
    raised by ``b``; the section is the polygonal strict sublevel set of
    the difference, traced exactly through the PL structure.  Returns
    ``(Z, nodes, v)``: the polygon, a node set on it, and nodal values
    of the shifted function (zero on the boundary nodes).

    Raises ``SectionError`` when the section is empty or reaches the
    domain boundary (not compactly contained).
    """
    if b <= 0:
        raise SectionError("section offset must be positive (empty section)")
    if isinstance(u, BrenierPotential):
        grads = u.targets.points
        offsets = -u.psi
        domain = u.domain
        mesh_points = None
    elif isinstance(u, PLConvexFunction):
        grads = u.face_grads
        offsets = u.face_offsets
        domain = u.nodes.domain
        mesh_points = u.nodes.points
    else:
        raise TypeError("extract_section needs a PL convex function or a potential")
    x0 = np.asarray(x0, dtype=float)
    if domain is None:
        raise SectionError("the potential carries no source domain")
    if not domain.contains_point(x0):
        raise SectionError("section center must be interior to the domain")

    vals0 = grads @ x0 + offsets
    j0 = int(np.argmax(vals0))
    g0 = grads[j0]
    u0 = float(vals0[j0])
    # Sublevel set {max_f (g_f.z + c_f) < u0 + g0.(z - x0) + b}.
    lo, hi = domain.bounding_box()
    pad = 2.0 * float(np.max(hi - lo))
    verts = rectangle(lo - pad, hi + pad).vertices
    tags = [None] * 4
    rhs0 = u0 - g0 @ x0 + b
    for fi in range(len(grads)):
        normal = grads[fi] - g0
        if np.linalg.norm(normal) == 0.0:
            continue
        verts, tags = clip_tagged(verts, tags, normal, rhs0 - offsets[fi], None)
        if len(verts) < 3:
            raise SectionError("section is empty")
    try:
        z_poly = ConvexPolygon(verts)
    except GeometryError as exc:
        raise SectionError("section degenerated while clipping") from exc
    dist = domain.boundary_distance(z_poly.vertices)
    inside = domain.contains(z_poly.vertices)
    if not np.all(inside) or float(np.min(dist)) <= 1e-9 * domain.diameter():
        raise SectionError("section is not compactly contained in the domain")

    def shifted(pts):
        pts = np.atleast_2d(pts)
        vals = np.max(pts @ grads.T + offsets[None, :], axis=1)
        return vals - (u0 + (pts - x0) @ g0 + b)

    if mesh_points is not None:
        inside_z = z_poly.contains(mesh_points) & (
            z_poly.boundary_distance(mesh_points) > 1e-10 * z_poly.diameter())
        interior = mesh_points[inside_z]
    else:
        interior = z_poly.grid_points(z_poly.diameter() / mesh_n,
                                      inset=0.2 * z_poly.diameter() / mesh_n)
    spacing = z_poly.diameter() / mesh_n
    bpts = boundary_nodes(z_poly, spacing)
    if len(interior) == 0:
        raise SectionError("section contains no interior nodes at this resolution")
    points = np.vstack([interior, bpts])
    flags = np.concatenate([np.zeros(len(interior), bool), np.ones(len(bpts), bool)])
    nodes = NodeSet(z_poly, points, flags)
    v = shifted(points)
    v[flags] = 0.0
    return z_poly, nodes, v
