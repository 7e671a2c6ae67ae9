"""Variational eigenvalues of the p-fractional Hardy operator.

Computes the sharp fractional Hardy constant, assembles the discrete
nonlocal energy with an optional Hardy term, solves the weighted
eigenvalue problem (sign-changing weights allowed), and verifies the
qualitative theory (simplicity, sign structure, monotonicities, scaling
collapse, eigenvalue growth) at desk scale.
"""

from .eigen import (
    EigenPair,
    SolverOptions,
    SpectrumReport,
    lambda_growth_check,
    pencil_eigensolve,
    scaling_collapse_test,
    solve_lambda1,
    solve_sequence_p2,
    verify_domain_monotonicity,
    verify_sign_properties,
    verify_simplicity,
    verify_weight_monotonicity,
)
from .errors import ConvergenceError, ValidationError, VerificationError
from .grid import Grid, SubdomainRelation, build_box_grid, build_interval_grid, restrict
from .hardy import HardyParams, QuadratureResult, hardy_constant, phi
from .nonlocal_form import (
    BrezisLiebReport,
    NonlocalForm,
    PiconeResult,
    apply_At,
    assemble,
    brezis_lieb_check,
    discrete_hardy_min_ratio,
    energy,
    gradient,
    picone_defect,
    r_functional,
    x_norm,
)
from .weights import (
    ApReport,
    ProbePlan,
    Weight,
    check_Ap,
    constant_weight,
    example_weight,
    expression_weight,
    perturbed_weight,
    pointwise_compare,
    scale_weight,
    tabulated_weight,
)

__version__ = "0.1.0"

__all__ = [
    "ApReport",
    "BrezisLiebReport",
    "ConvergenceError",
    "EigenPair",
    "Grid",
    "HardyParams",
    "NonlocalForm",
    "PiconeResult",
    "ProbePlan",
    "QuadratureResult",
    "SolverOptions",
    "SpectrumReport",
    "SubdomainRelation",
    "ValidationError",
    "VerificationError",
    "Weight",
    "apply_At",
    "assemble",
    "brezis_lieb_check",
    "build_box_grid",
    "build_interval_grid",
    "check_Ap",
    "constant_weight",
    "discrete_hardy_min_ratio",
    "energy",
    "example_weight",
    "expression_weight",
    "gradient",
    "hardy_constant",
    "lambda_growth_check",
    "pencil_eigensolve",
    "perturbed_weight",
    "phi",
    "picone_defect",
    "pointwise_compare",
    "r_functional",
    "restrict",
    "scale_weight",
    "scaling_collapse_test",
    "solve_lambda1",
    "solve_sequence_p2",
    "tabulated_weight",
    "verify_domain_monotonicity",
    "verify_sign_properties",
    "verify_simplicity",
    "verify_weight_monotonicity",
    "x_norm",
    "__version__",
]
