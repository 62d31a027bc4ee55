from .galerkin import GalerkinBasis
from .output import write_diagnostics, write_trajectory
from .problem import (
    NewtonOptions,
    ProblemSpec,
    SolverConfig,
    SolverFailure,
    TrajectoryRecord,
    admissibility,
    l2q_distance,
    l2q_norm,
    residual,
    spatial_operator,
)
from .regularized import (
    RegularizedFamily,
    linear_mode_closed_form,
    regularized_kernel_velocity,
    solve_elliptic_regularized,
    solve_scalar_two_point,
)
from .stepping import run_trajectory, solve_galerkin, step_implicit_newton, step_semi_implicit

__all__ = [
    "GalerkinBasis", "NewtonOptions", "ProblemSpec", "RegularizedFamily", "SolverConfig", "SolverFailure",
    "TrajectoryRecord", "admissibility", "l2q_distance", "l2q_norm", "linear_mode_closed_form",
    "regularized_kernel_velocity", "residual", "run_trajectory", "solve_elliptic_regularized",
    "solve_galerkin", "solve_scalar_two_point", "spatial_operator", "step_implicit_newton",
    "step_semi_implicit", "write_diagnostics", "write_trajectory",
]
