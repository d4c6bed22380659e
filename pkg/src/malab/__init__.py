"""Numerical laboratory for Alexandrov solutions of the Monge-Ampere
equation and semi-discrete optimal transport maps in the plane."""

from .density import DensitySpec, parse_density
from .errors import (ConfigError, DegenerateGeometryError, EmptyCellError,
                     GeometryError, MalabError, NonConvergenceError,
                     SectionError, SingularJacobianError)
from .geometry import ConvexPolygon, rectangle, regular_polygon
from .harness import (ConvergenceReport, ExperimentConfig, emit_report,
                      run_ot_stability, run_stability)
from .hull import lower_hull_3d
from .nodes import NodeSet, grid_nodes, nodes_from_csv, nodes_to_csv
from .plconvex import (AtomicMeasure, PLConvexFunction, convex_envelope,
                       ma_measure, subdifferential_cell)
from .sequences import gen_density_sequence, gen_domain_sequence
from .sobolev import (GridWindow, HessianField, contact_fraction,
                      envelope_difference_bound, envelope_measure_bound,
                      lgamma_hessian_norm, psd_pinch_fraction, sample_hessian,
                      w21_distance)
from .solver import SolverOptions, cell_masses, solve_dirichlet, solver_residual
from .transport import (BrenierPotential, LaguerreDiagram, TargetCloud,
                        density_ratio_l1, extract_section, laguerre_diagram,
                        map_w11_distance, quantize_density, solve_semidiscrete,
                        transport_map, transport_map_eval)

__version__ = "0.1.0"
