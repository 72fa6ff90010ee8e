"""Limited-memory steepest descent toolkit.

Gradient methods that store a handful of recent gradients and compute several
stepsizes at once from eigenvalues of small projected matrices, for strictly
convex quadratic and general unconstrained problems, together with a
benchmark harness producing performance profiles and sweep statistics.
"""

from .bench import (
    BenchMatrix,
    BenchRow,
    ConfigError,
    MethodSpec,
    ProfileCurve,
    emit,
    performance_profile,
    run_matrix,
    run_one,
    sweep_stats,
)
from .history import AllNegative, StepStack, SweepHistory
from .kernels import NoConvergence, NotSPD, ZeroMatrix
from .problems import (
    NonlinearProblem,
    NotSymmetric,
    ParseError,
    QuadraticProblem,
    UnknownProblem,
    builtin_nonlinear,
    dense_quadratic,
    geometric_quadratic,
    gradient_check,
    load_matrix_market,
)
from .solvers import (
    ADAPTIVE_METHODS,
    GENERAL_ENGINES,
    QUAD_ENGINES,
    STEP_ENGINES,
    EvaluatorFailure,
    NonPositiveCurvature,
    RunReport,
    SolverConfig,
    abb_gradient,
    cauchy_step,
    solve_general,
    solve_quadratic,
)

__all__ = [
    "ADAPTIVE_METHODS",
    "AllNegative",
    "BenchMatrix",
    "BenchRow",
    "ConfigError",
    "EvaluatorFailure",
    "GENERAL_ENGINES",
    "MethodSpec",
    "NoConvergence",
    "NonPositiveCurvature",
    "NonlinearProblem",
    "NotSPD",
    "NotSymmetric",
    "ParseError",
    "ProfileCurve",
    "QUAD_ENGINES",
    "QuadraticProblem",
    "RunReport",
    "STEP_ENGINES",
    "SolverConfig",
    "StepStack",
    "SweepHistory",
    "UnknownProblem",
    "ZeroMatrix",
    "abb_gradient",
    "builtin_nonlinear",
    "cauchy_step",
    "dense_quadratic",
    "emit",
    "geometric_quadratic",
    "gradient_check",
    "load_matrix_market",
    "performance_profile",
    "run_matrix",
    "run_one",
    "solve_general",
    "solve_quadratic",
    "sweep_stats",
]

__version__ = "0.1.0"
