"""Numerical toolkit for fractional variational problems of Bolza type.

Trajectories are parametrized by (u, y) with x = y + I^alpha[u], costs
combine a Mayer endpoint term with a fractional-order integral Lagrange term,
and the necessary optimality conditions (Euler-Lagrange, transversality,
Legendre) are exposed as computable residuals.
"""

from .conditions import (
    RegularityError,
    ResidualReport,
    build_report,
    el_residual,
    extract_multiplier,
    legendre_check,
    moments,
    rigidity_probe,
    transversality_residuals,
)
from .convex import dist, dist_sq_gradient, in_normal_cone, normal_cone_basis, project
from .expr import EvalError, ParseError, differentiate, evaluate, parse, to_string
from .frac_ops import (
    FracDomainError,
    FracWeights,
    Grid,
    GridFn,
    GridMismatchError,
    caputo_derivative_left,
    reconstruct_trajectory,
    rl_integral_left,
    rl_integral_right,
    rl_integral_right_at,
    window_variation,
)
from .functional import (
    NeedleParams,
    bolza_eval,
    gateaux_first,
    gateaux_second,
    needle_apply,
    needle_bounds_check,
    needle_sensitivity,
    penalized_value,
    y_sensitivity,
)
from .model import (
    Ball,
    Box,
    ConvexSet,
    ProblemSpec,
    Product,
    Singleton,
    TrajectoryPair,
    WholeSpace,
    standard_constraint,
    validate,
)
from .solver import (
    SolverConfig,
    SolveResult,
    SolverError,
    default_initial,
    nonexistence_diagnostic,
    objective_gradient,
    solve,
)

__version__ = "0.1.0"
