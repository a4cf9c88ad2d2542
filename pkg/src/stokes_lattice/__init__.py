"""Singly periodic arrays of 2D Stokes singularities in a no-slip channel or
above a no-slip wall, evaluated through Goursat functions in the annulus
variable ``zeta = exp(i z)``."""

__version__ = "0.1.0"

from stokes_lattice.errors import (AccuracyNotMetError, ConfigurationError, ConvergenceError,
                                   DomainError, ProximityError, StokesLatticeError)
from stokes_lattice.model import (KINDS, TWO_PI, ChannelGeometry, HalfPlaneGeometry, Kind, Singularity,
                                  SingularitySpec, canonicalize)
from stokes_lattice.goursat import GoursatParts, evaluate
from stokes_lattice.channel import (ChannelSolution, build_channel_solution, coefficient_terms,
                                    parametric_derivative_build)
from stokes_lattice.halfplane import HalfPlaneSolution, build_halfplane_solution
from stokes_lattice.flow import (GridSpec, complex_velocity, contour_diagnostics, eval_pressure_vorticity,
                                 eval_sample, eval_velocity, sample_grid, stagnation_census,
                                 trace_streamline, trace_streamlines)
from stokes_lattice.transform import assemble_and_solve, oracle_eval, pf_roots
from stokes_lattice.validation import ValidationReport, cross_method_compare, validation_battery
from stokes_lattice.problem import ProblemConfig, SingularityEntry
from stokes_lattice.estimators import ChannelArrayFlow, HalfPlaneArrayFlow

__all__ = [
    "__version__",
    "AccuracyNotMetError", "ConfigurationError", "ConvergenceError", "DomainError", "ProximityError",
    "StokesLatticeError",
    "KINDS", "TWO_PI", "ChannelGeometry", "HalfPlaneGeometry", "Kind", "Singularity", "SingularitySpec",
    "canonicalize", "GoursatParts", "evaluate",
    "ChannelSolution", "build_channel_solution", "coefficient_terms", "parametric_derivative_build",
    "HalfPlaneSolution", "build_halfplane_solution",
    "GridSpec", "complex_velocity", "contour_diagnostics", "eval_pressure_vorticity", "eval_sample",
    "eval_velocity", "sample_grid", "stagnation_census", "trace_streamline", "trace_streamlines",
    "assemble_and_solve", "oracle_eval", "pf_roots",
    "ValidationReport", "cross_method_compare", "validation_battery",
    "ProblemConfig", "SingularityEntry", "ChannelArrayFlow", "HalfPlaneArrayFlow",
]
