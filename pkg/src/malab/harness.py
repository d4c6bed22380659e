"""Experiment orchestration: configs, stability runs, reports.

Convergence acceptance is always relative to the discretization floor,
defined operationally as the distance between the limit solve and an
independent re-discretization of the same limit problem.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .density import DensitySpec, parse_density
from .errors import ConfigError, MalabError
from .geometry import ConvexPolygon, polygon_integrate, rectangle
from .nodes import NodeSet, grid_nodes
from .plconvex import PLConvexFunction
from .sequences import (decaying_perturbation, gen_density_sequence,
                        gen_domain_sequence)
from .sobolev import (GridWindow, contact_fraction, envelope_difference_bound,
                      lgamma_hessian_norm, psd_pinch_fraction, sample_hessian,
                      w21_components)
from .solver import SolverOptions, solve_dirichlet
from .transport import (density_ratio_l1, laguerre_diagram, map_w11_distance,
                        quantize_density, solve_semidiscrete)

SCENARIOS = (
    "S1_decaying",
    "S1_oscillatory_control",
    "S1_mollified",
    "S1_domain_hausdorff",
    "S2_ot_decaying",
    "S2_ot_translation",
)

GAMMA_SWEEP = (1.0, 1.1, 1.25, 1.5, 2.0)
CONTACT_TAU_SWEEP = (1e-7, 1e-11)  # the default 1e-9 is the main column


@dataclass
class ExperimentConfig:
    scenario: str = "S1_decaying"
    base_density: str = "mix:const:1;clamp:bump:0.25,0.15,0.6,0.3,0.0,0.6"
    target_density: str = "const:1"
    domain: list = field(default_factory=lambda: [[-1, -1], [1, -1], [1, 1], [-1, 1]])
    target_domain: list = None
    grid: int = 33
    k_max: int = 8
    epsilons: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    window: list = field(default_factory=lambda: [[-0.5, -0.5], [0.5, -0.5],
                                                  [0.5, 0.5], [-0.5, 0.5]])
    tol: float = 1e-7
    seed: int = 0
    cloud: int = 16
    jitter: float = 0.15

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.k_max < 3:
            raise ConfigError("k_max must be at least 3")
        if not all(0 < e < 1 for e in self.epsilons):
            raise ConfigError("epsilons must lie in (0, 1)")
        if self.grid < 5:
            raise ConfigError("grid must be at least 5")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        known = set(ExperimentConfig.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return ExperimentConfig(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def domain_polygon(self) -> ConvexPolygon:
        return ConvexPolygon(self.domain)

    def window_polygon(self) -> ConvexPolygon:
        return ConvexPolygon(self.window)

    def target_polygon(self) -> ConvexPolygon:
        if self.target_domain is not None:
            return ConvexPolygon(self.target_domain)
        # Default: the source square shifted right by a quarter width.
        dom = self.domain_polygon()
        lo, hi = dom.bounding_box()
        return dom.translate([0.25 * (hi[0] - lo[0]), 0.0])


class ConvergenceReport:
    """Ordered per-k rows of every measured quantity, plus run metadata.

    Only the rows are part of the emitted artifact; floors and config
    echoes ride along in ``meta`` for in-process consumers.
    """

    def __init__(self, columns, rows, meta=None):
        self.columns = list(columns)
        self.rows = [dict(r) for r in rows]
        self.meta = dict(meta or {})
        ks = [r["k"] for r in self.rows]
        if ks != sorted(ks):
            raise ConfigError("report rows must be ordered by k")
        for r in self.rows:
            for c in self.columns:
                v = r[c]
                if not np.isfinite(v) or v < 0:
                    raise ConfigError(f"report value {c}={v} is not finite and nonnegative")

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(float(r[c])) if c != "k" else int(r[c])
                        for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        out = []
        for r in self.rows:
            out.append({c: (int(r[c]) if c == "k" else float(r[c])) for c in self.columns})
        return json.dumps(out, indent=2)

    @staticmethod
    def from_csv(text: str) -> "ConvergenceReport":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ConfigError("empty report CSV")
        columns = rows[0]
        parsed = []
        for raw in rows[1:]:
            if not raw:
                continue
            parsed.append({c: float(v) for c, v in zip(columns, raw)})
        return ConvergenceReport(columns, parsed)

    @staticmethod
    def from_json(text: str) -> "ConvergenceReport":
        data = json.loads(text)
        if not isinstance(data, list):
            raise ConfigError("report JSON must be an array of row objects")
        if not data:
            return ConvergenceReport([], [])
        columns = list(data[0].keys())
        return ConvergenceReport(columns, data)


def emit_report(report: ConvergenceReport, path: str, fmt: str = "csv"):
    """Write the report; format is ``csv`` or ``json``."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}")
    text = report.to_csv() if fmt == "csv" else report.to_json()
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise MalabError(f"cannot write report to {path}: {exc}") from exc


# -- scenario S1: Dirichlet stability ----------------------------------------

def _s1_columns(epsilons):
    cols = ["k", "l1_density", "w21", "w21_value", "w21_grad", "w21_hess"]
    for e in epsilons:
        cols.append(f"contact_frac_eps{e:g}")
    for e in epsilons:
        for tau in CONTACT_TAU_SWEEP:
            cols.append(f"contact_frac_eps{e:g}_tau{tau:g}")
    for e in epsilons:
        cols.append(f"pinch_frac_eps{e:g}")
    cols += ["envgap_lhs", "envgap_rhs"]
    for g in GAMMA_SWEEP:
        cols.append(f"lgamma_{g:g}")
    cols.append("failed")
    return cols


def _window_function(u: PLConvexFunction, wnodes: NodeSet) -> PLConvexFunction:
    """Resample a PL convex function on the window's node set."""
    return PLConvexFunction(wnodes, u.evaluate(wnodes.points))


def run_stability(cfg: ExperimentConfig) -> ConvergenceReport:
    """Dirichlet stability experiment: solve the limit problem and the
    k-sequence, measure every distance on the common window.

    Deterministic given the seed.  A solver failure flags the row and
    the run continues; if every k fails the run is an error.
    """
    if not cfg.scenario.startswith("S1"):
        raise ConfigError(f"run_stability needs an S1 scenario, got {cfg.scenario}")
    domain = cfg.domain_polygon()
    window_poly = cfg.window_polygon()
    lo, hi = domain.bounding_box()
    h = float(max(hi - lo)) / (cfg.grid - 1)
    window = GridWindow(window_poly, 2 * h, domain)
    f = parse_density(cfg.base_density)
    f.validate_on(domain)
    opts = SolverOptions(newton_tol=cfg.tol)

    nodes = grid_nodes(domain, cfg.grid, seed=cfg.seed, jitter=cfg.jitter)
    u = solve_dirichlet(domain, f, nodes, opts)
    field_u = sample_hessian(u, window)
    wnodes = window.node_set()
    u_w = _window_function(u, wnodes)

    nodes_floor = grid_nodes(domain, cfg.grid, seed=cfg.seed + 1, jitter=cfg.jitter)
    u_floor = solve_dirichlet(domain, f, nodes_floor, opts)
    field_floor = sample_hessian(u_floor, window)
    fv, fg, fh = w21_components(field_u, field_floor)
    floors = {"w21": fv + fg + fh, "w21_value": fv, "w21_grad": fg, "w21_hess": fh}

    columns = _s1_columns(cfg.epsilons)
    rows = []
    n_failed = 0
    for k in range(1, cfg.k_max + 1):
        dom_k, nodes_k = domain, nodes
        if cfg.scenario == "S1_decaying":
            f_k = gen_density_sequence(f, "decaying", k)
        elif cfg.scenario == "S1_oscillatory_control":
            f_k = gen_density_sequence(f, "oscillatory_control", k)
        elif cfg.scenario == "S1_mollified":
            f_k = gen_density_sequence(f, "mollified", k)
        else:  # S1_domain_hausdorff
            f_k = f
            dom_k = gen_domain_sequence(domain, k)
            nodes_k = grid_nodes(dom_k, cfg.grid, seed=cfg.seed, jitter=cfg.jitter)
        row = dict.fromkeys(columns, 0.0)
        row["k"] = k
        row["l1_density"] = polygon_integrate(
            lambda p: np.abs(f_k(p) - f(p)), window_poly, order=6, rel_tol=1e-9)
        try:
            u_k = solve_dirichlet(dom_k, f_k, nodes_k, opts)
        except MalabError:
            row["failed"] = 1.0
            n_failed += 1
            rows.append(row)
            continue
        field_k = sample_hessian(u_k, window)
        dv, dg, dh = w21_components(field_u, field_k)
        row.update(w21=dv + dg + dh, w21_value=dv, w21_grad=dg, w21_hess=dh)
        for e in cfg.epsilons:
            row[f"contact_frac_eps{e:g}"] = contact_fraction(u, u_k, e, window)
            for tau in CONTACT_TAU_SWEEP:
                row[f"contact_frac_eps{e:g}_tau{tau:g}"] = contact_fraction(
                    u, u_k, e, window, tau_rel=tau)
            row[f"pinch_frac_eps{e:g}"] = psd_pinch_fraction(field_u, field_k, e)
        u_kw = _window_function(u_k, wnodes)
        lhs, rhs = envelope_difference_bound(u_w, u_kw, f, f_k, window_poly)
        row["envgap_lhs"], row["envgap_rhs"] = lhs, rhs
        for g in GAMMA_SWEEP:
            row[f"lgamma_{g:g}"] = lgamma_hessian_norm(field_k, g)
        rows.append(row)
    if n_failed == cfg.k_max:
        raise MalabError("every k-solve failed")
    meta = {"floors": floors, "scenario": cfg.scenario, "seed": cfg.seed}
    return ConvergenceReport(columns, rows, meta)


# -- scenario S2: optimal transport stability ---------------------------------

_S2_COLUMNS = ["k", "l1_source", "l1_target", "ratio_l1", "map_w11",
               "dual_residual", "failed"]


def run_ot_stability(cfg: ExperimentConfig) -> ConvergenceReport:
    """Semi-discrete transport stability along decaying perturbations.

    Solves the limit pair once, each k-pair at the same cloud
    resolution, and measures the density-ratio and map distances; the
    floor re-quantizes the limit target with a shifted grid.
    """
    if not cfg.scenario.startswith("S2"):
        raise ConfigError(f"run_ot_stability needs an S2 scenario, got {cfg.scenario}")
    dom1 = cfg.domain_polygon()
    dom2 = cfg.target_polygon()
    window_poly = cfg.window_polygon()
    lo, hi = dom1.bounding_box()
    h = float(max(hi - lo)) / (cfg.grid - 1)
    window = GridWindow(window_poly, 2 * h, dom1)
    sigma = 4 * window.h
    translation = cfg.scenario == "S2_ot_translation"
    if translation:
        f = DensitySpec.constant(1.0)
        g = DensitySpec.constant(1.0)
    else:
        f = parse_density(cfg.base_density)
        g = parse_density(cfg.target_density)
    f.validate_on(dom1)
    g.validate_on(dom2)

    total_f = f.integrate(dom1)
    cloud = quantize_density(g, dom2, cfg.cloud, total_mass=total_f)
    pot = solve_semidiscrete(f, dom1, cloud, tol=cfg.tol)

    rng = np.random.default_rng(cfg.seed + 7919)
    off = rng.uniform(0.0, 1.0, size=2)
    cloud_floor = quantize_density(g, dom2, cfg.cloud, total_mass=total_f, grid_offset=off)
    pot_floor = solve_semidiscrete(f, dom1, cloud_floor, tol=cfg.tol)
    floors = {
        "ratio_l1": density_ratio_l1(f, g, pot_floor, f, g, pot, dom1, window.h),
        "map_w11": map_w11_distance(pot_floor, pot, window, sigma),
    }

    rows = []
    n_failed = 0
    for k in range(1, cfg.k_max + 1):
        row = dict.fromkeys(_S2_COLUMNS, 0.0)
        row["k"] = k
        if translation:
            f_k, g_k = f, g
            dom2_k = dom2.translate([2.0 ** (-k), 0.0])
        else:
            f_k = gen_density_sequence(f, "decaying", k)
            g_k = gen_density_sequence(g, "decaying", k,
                                       bump_center=dom2.centroid(), bump_width=0.35)
            dom2_k = dom2
        row["l1_source"] = polygon_integrate(
            lambda p: np.abs(f_k(p) - f(p)), dom1, order=6, rel_tol=1e-9)
        row["l1_target"] = polygon_integrate(
            lambda p: np.abs(g_k(p) - g(p)), dom2_k, order=6, rel_tol=1e-9)
        try:
            total_fk = f_k.integrate(dom1)
            cloud_k = quantize_density(g_k, dom2_k, cfg.cloud, total_mass=total_fk)
            pot_k = solve_semidiscrete(f_k, dom1, cloud_k, tol=cfg.tol)
        except MalabError:
            row["failed"] = 1.0
            n_failed += 1
            rows.append(row)
            continue
        row["ratio_l1"] = density_ratio_l1(f_k, g_k, pot_k, f, g, pot, dom1, window.h)
        row["map_w11"] = map_w11_distance(pot_k, pot, window, sigma)
        diag = laguerre_diagram(pot_k, dom1, f_k)
        row["dual_residual"] = float(np.max(
            np.abs(diag.masses - cloud_k.masses) / cloud_k.masses))
        rows.append(row)
    if n_failed == cfg.k_max:
        raise MalabError("every k-solve failed")
    meta = {"floors": floors, "scenario": cfg.scenario, "seed": cfg.seed}
    return ConvergenceReport(_S2_COLUMNS, rows, meta)
