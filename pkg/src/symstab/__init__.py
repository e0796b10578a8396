"""Schwarz symmetrization, Dirichlet Poisson solves, and quantitative
symmetrization-stability audits on 2-D Cartesian grids."""

from .geometry import (BallSpec, DomainSpec, GridDomain, fraenkel_asymmetry,
                       isoperimetric_deficit, measure, perimeter, rasterize,
                       unit_ball_measure)
from .rearrangement import (MonotoneProfile, RadialField, ScalarField,
                            decreasing_rearrangement, distribution_function,
                            hardy_littlewood_gap, lorentz_lambda_norm,
                            quantitative_hl_deficit, schwarz_rearrangement,
                            theta_p)
from .elliptic import (PoissonProblem, RadialSolution, SolverError,
                       dirichlet_energy, gradient_magnitude, radial_solution,
                       solve_dirichlet)
from .audit import (DeficitReport, StabilityConstants, Verdict,
                    audit_instance, audit_solution, counterexample_family,
                    f_stability, l1_stability, l2_asymmetry_bound, normalize,
                    polya_szego_deficit, section4_quantities,
                    superlevel_audit, talenti_gap)

__version__ = "0.1.0"

__all__ = [
    "BallSpec", "DomainSpec", "GridDomain", "fraenkel_asymmetry",
    "isoperimetric_deficit", "measure", "perimeter", "rasterize",
    "unit_ball_measure",
    "MonotoneProfile", "RadialField", "ScalarField",
    "decreasing_rearrangement", "distribution_function",
    "hardy_littlewood_gap", "lorentz_lambda_norm",
    "quantitative_hl_deficit", "schwarz_rearrangement", "theta_p",
    "PoissonProblem", "RadialSolution", "SolverError", "dirichlet_energy",
    "gradient_magnitude", "radial_solution", "solve_dirichlet",
    "DeficitReport", "StabilityConstants", "Verdict", "audit_instance",
    "audit_solution", "counterexample_family", "f_stability", "l1_stability",
    "l2_asymmetry_bound", "normalize", "polya_szego_deficit",
    "section4_quantities", "superlevel_audit", "talenti_gap",
    "__version__",
]
