"""Piecewise-linear Galerkin solver and estimate checker for drift-diffusion problems.

Solves ``-div(A grad u) + <B, grad u> + (c + alpha) u = f - div F`` with
zero Dirichlet data on a rectangle and compares discrete solutions with
explicit a priori bounds (energy, L-infinity, L^r contraction, L1
stability under coefficient perturbation).
"""

from .mesh import Mesh, Rect, build_structured_mesh, refine_uniform, read_mesh, shrink_domain, write_mesh
from .fields import (
    AnalyticField,
    AssumptionError,
    CoefficientSet,
    ElementField,
    Field,
    FieldEvaluationError,
    NodalField,
    check_ellipticity,
    check_nonnegative,
    check_weak_divergence,
    constant,
    from_expression,
    lp_norm,
    make_singular_drift,
    mollify_field,
)
from .assembly import AssembledSystem, MeshPecletWarning, assemble_dual, assemble_load, assemble_primal
from .linsolve import NonConvergenceError, SingularSystemError, SolveOptions, solve_sparse
from .resolvent import DiscreteResolvent, apply_resolvent, check_lr_contraction, check_submarkov
from .estimates import EstimateConstants, compute_constants, linf_bound, stability_rhs
from .harness import (
    EstimateReport,
    Solution,
    duality_check,
    extended_l1_check,
    mms_convergence_study,
    random_suite,
    run_suite,
    solve_primal,
    stability_sweep,
    verify_solution_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "Mesh", "Rect", "build_structured_mesh", "refine_uniform", "read_mesh", "write_mesh", "shrink_domain",
    "Field", "AnalyticField", "ElementField", "NodalField", "CoefficientSet", "AssumptionError",
    "FieldEvaluationError", "constant", "from_expression", "make_singular_drift", "mollify_field", "lp_norm",
    "check_ellipticity", "check_weak_divergence", "check_nonnegative",
    "AssembledSystem", "MeshPecletWarning", "assemble_primal", "assemble_dual", "assemble_load",
    "SolveOptions", "solve_sparse", "SingularSystemError", "NonConvergenceError",
    "DiscreteResolvent", "apply_resolvent", "check_submarkov", "check_lr_contraction",
    "EstimateConstants", "compute_constants", "linf_bound", "stability_rhs",
    "Solution", "EstimateReport", "solve_primal", "mms_convergence_study", "verify_solution_bounds",
    "duality_check", "extended_l1_check", "stability_sweep", "random_suite", "run_suite",
]
