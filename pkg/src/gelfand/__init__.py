"""Stable and extremal solutions of -Δu = λ f(u) on balls, in radial form."""

from .continuation import Branch, ContinuationSettings, Fold, NoFold, detect_fold, extremal_profile, minimal_solution, trace_branch
from .estimates import (
    DecayInput,
    MorreyParams,
    decay_check,
    holder_norm,
    holder_seminorm,
    l1_bound_check,
    lebesgue_norm,
    morrey_norm,
    pohozaev_residual,
    universality_ratios,
)
from .nonlinearity import Nonlinearity
from .oracles import ball_lambda1, critical_exponents, log_profile_verdict, singular_profile
from .radial import GridError, GridFunction, RadialGrid, build_grid
from .solvers import Divergence, NonConvergence, Problem, Solution, monotone_iteration, newton_solve, residual
from .stability import (
    EstimateReport,
    StabilityCertificate,
    curvature_test_inequality,
    hardy_margin,
    principal_eigenvalue,
    quadratic_form,
    weighted_test_inequality,
)

__version__ = "0.1.0"
