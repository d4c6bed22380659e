"""Command-line entry points.

Exit codes: 0 on success, 2 for configuration/input errors, 3 for
solver failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

from .density import parse_density
from .errors import (ConfigError, EmptyCellError, GeometryError, MalabError,
                     NonConvergenceError, SingularJacobianError)
from .harness import ConvergenceReport, ExperimentConfig, emit_report, run_ot_stability, run_stability
from .nodes import grid_nodes, nodes_from_csv, nodes_to_csv, polygon_from_csv
from .plconvex import convex_envelope
from .solver import SolverOptions, solve_dirichlet
from .transport import laguerre_diagram, quantize_density, solve_semidiscrete

_CONFIG_ERRORS = (ConfigError, GeometryError, OSError, ValueError)
_SOLVER_ERRORS = (NonConvergenceError, SingularJacobianError, EmptyCellError, MalabError)


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _cmd_solve(args) -> int:
    domain = polygon_from_csv(_read(args.domain))
    f = parse_density(args.density)
    f.validate_on(domain)
    nodes = grid_nodes(domain, args.grid)
    u = solve_dirichlet(domain, f, nodes, SolverOptions(newton_tol=args.tol))
    _write(args.out, nodes_to_csv(nodes, u.values))
    return 0


def _cmd_ot(args) -> int:
    dom1 = polygon_from_csv(_read(args.source_domain))
    dom2 = polygon_from_csv(_read(args.target_domain))
    f = parse_density(args.source)
    g = parse_density(args.target)
    f.validate_on(dom1)
    g.validate_on(dom2)
    cloud = quantize_density(g, dom2, args.cloud, total_mass=f.integrate(dom1))
    pot = solve_semidiscrete(f, dom1, cloud, tol=args.tol)
    diagram = laguerre_diagram(pot, dom1, f)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["yx", "yy", "mass", "psi"])
    for y, m, p in zip(cloud.points, diagram.masses, pot.psi):
        w.writerow([repr(float(y[0])), repr(float(y[1])), repr(float(m)), repr(float(p))])
    _write(args.out, buf.getvalue())
    return 0


def _cmd_envelope(args) -> int:
    nodes, values = nodes_from_csv(_read(args.infile))
    env, _ = convex_envelope(nodes, values)
    _write(args.out, nodes_to_csv(nodes, env))
    return 0


def _cmd_stability(args, runner) -> int:
    cfg = ExperimentConfig.from_json(_read(args.config))
    report = runner(cfg)
    fmt = "json" if args.out.endswith(".json") else "csv"
    emit_report(report, args.out, fmt)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="malab")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="prescribed-determinant Dirichlet solve")
    p.add_argument("--domain", required=True, help="polygon CSV (x,y loop)")
    p.add_argument("--density", required=True, help="density spec string")
    p.add_argument("--grid", type=int, default=33)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ot", help="semi-discrete optimal transport solve")
    p.add_argument("--source", required=True, help="source density spec")
    p.add_argument("--source-domain", required=True)
    p.add_argument("--target", required=True, help="target density spec")
    p.add_argument("--target-domain", required=True)
    p.add_argument("--cloud", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--out", required=True)

    p = sub.add_parser("envelope", help="convex envelope of nodal values")
    p.add_argument("--in", dest="infile", required=True, help="node CSV")
    p.add_argument("--out", required=True)

    for name in ("stability", "ot-stability"):
        p = sub.add_parser(name, help=f"run the {name.replace('-', ' ')} experiment")
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "ot":
            return _cmd_ot(args)
        if args.command == "envelope":
            return _cmd_envelope(args)
        if args.command == "stability":
            return _cmd_stability(args, run_stability)
        if args.command == "ot-stability":
            return _cmd_stability(args, run_ot_stability)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
