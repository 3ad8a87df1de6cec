"""Leverage-score row-sampling solvers for sparse least squares and ERM.

The pipeline: probe-based leverage estimation with a regression solver in
the loop (``compute_ls``), row sampling into spectral sparsifiers
(``sample_rows``), an accelerated dual coordinate-descent kernel behind a
proximal-point outer loop (``dual_regression_solve``), a ridge homotopy
that bootstraps its own leverage estimates (``homotopy.solve``), a
variance-reduced extension to generalized losses (``erm_full_solve``), and
success-probability boosting (``reduction_boost``, ``markov_boost``).
"""

from .counters import WorkCounter
from .dualreg import dual_regression_solve, preconditioned_solve
from .erm import (
    ErmProblem,
    GenAcdComponent,
    LogisticAugComponent,
    QuadraticComponent,
    VrComponents,
    build_vr,
    concentration_probe,
    conjugate_gradient_1d,
    erm_full_solve,
    erm_solve_step,
    erm_value_grad,
    gen_acd_solve,
    logistic_aug_problem,
    quadratic_problem,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateProblemError,
    InvariantViolation,
    NumericError,
    PreconditionerQualityError,
    SamplingFailureError,
)
from .generate import generate
from .homotopy import (
    ReductionConfig,
    ReductionStats,
    SolverReport,
    initial_state,
    markov_boost,
    reduction_boost,
)
from .homotopy import solve as solve_regression
from .leverage import (
    LeverageVector,
    SampledMatrix,
    compute_ls,
    plan_jl_config,
    sample_rows,
    solve_using_ls,
    verify_overestimate_bracket,
)
from .oracles import (
    RankDeficientError,
    RegressionProblem,
    SpectralBounds,
    oracle_leverage,
    oracle_solve,
    oracle_spectral,
)
from .sparse import SparseMatrix, from_coo, from_dense, read_matrix_market

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "DegenerateProblemError",
    "ErmProblem",
    "GenAcdComponent",
    "InvariantViolation",
    "LeverageVector",
    "LogisticAugComponent",
    "NumericError",
    "PreconditionerQualityError",
    "QuadraticComponent",
    "RankDeficientError",
    "ReductionConfig",
    "ReductionStats",
    "RegressionProblem",
    "SampledMatrix",
    "SamplingFailureError",
    "SolverReport",
    "SparseMatrix",
    "SpectralBounds",
    "VrComponents",
    "WorkCounter",
    "build_vr",
    "compute_ls",
    "concentration_probe",
    "conjugate_gradient_1d",
    "dual_regression_solve",
    "erm_full_solve",
    "erm_solve_step",
    "erm_value_grad",
    "from_coo",
    "from_dense",
    "gen_acd_solve",
    "generate",
    "initial_state",
    "logistic_aug_problem",
    "markov_boost",
    "oracle_leverage",
    "oracle_solve",
    "oracle_spectral",
    "plan_jl_config",
    "preconditioned_solve",
    "quadratic_problem",
    "read_matrix_market",
    "reduction_boost",
    "sample_rows",
    "solve_regression",
    "solve_using_ls",
    "verify_overestimate_bracket",
]
