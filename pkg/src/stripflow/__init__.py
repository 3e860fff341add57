"""Numerical laboratory for heat flow and Brownian motion on strip complexes."""

from .assembly import (Discretization, Grid, apply_generator, assemble, build_grid,
                       field_from_function, gradient_sup)
from .brownian import (EmpiricalMeasure, ExitLaw, GreenCurve, exit_distribution,
                       green_estimate, sample_ctmc, sample_sde)
from .complexes import (Fiber, PointOnComplex, StripComplex, approx_unity, ball_volume,
                        build_treebolic, distance, measure, treebolic_exhaustion,
                        TreebolicExhaustion)
from .graph import (Edge, MetricGraph, Vertex, build_tree, completeness_indicator,
                    edge_exhaustion, graph_distance)
from .heat import (GaussianBoundReport, HeatKernelSlice, SmoothnessReport,
                   gaussian_bound_check, heat_kernel, kirchhoff_residual,
                   smoothness_probe, solve_harmonic, spectral_bottom, step_heat,
                   total_mass)
from .profiles import EdgeCoefficients, Profile, treebolic_coefficients
from .quotients import (ProjectionReport, QuotientMap, WeightCertificate,
                        check_weight_compatibility, collapse_fiber,
                        compare_projected_heat, horocyclic_collapse, slice_plane)
from .subordination import (LINE, QuadratureSpec, heat_kernel_fiber, poisson_extension,
                            resolvent_fourier_coefficient, resolvent_kernel_G,
                            resolvent_mass)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
