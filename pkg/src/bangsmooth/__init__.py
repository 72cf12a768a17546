"""Smoothed bang-bang optimal control by the indirect shooting method.

The discontinuous sign-of-switching-function control law is replaced by
a smooth saturation (normalized L2 or scaled tanh), the resulting
two-point boundary value problem is solved by single shooting, and a
continuation over the smoothing constant recovers the bang-bang limit.
Two benchmark problems ship with the package: a minimal-time harmonic
oscillator and a minimal-fuel many-revolution GTO to GEO transfer in
modified equinoctial elements.
"""

from .continuation import (
    DEFAULT_FLOORS,
    ContinuationReport,
    ContinuationSchedule,
    continue_solve,
)
from .lowthrust import (
    DegenerateDirectionError,
    LowThrustProblem,
    MeeState,
    SpacecraftParams,
    TransferBoundary,
    count_revolutions,
    fuel_consumed,
    lowthrust_aug_dynamics,
    lowthrust_residual,
    mee_matrices,
    switching_function,
    thrust_direction,
)
from .montecarlo import (
    GuessDomain,
    MonteCarloStats,
    read_records_jsonl,
    run_monte_carlo,
    summarize,
    write_records_csv,
    write_records_jsonl,
    write_stats_json,
)
from .numerics import (
    EvaluationError,
    IntegratorConfig,
    RootSolveConfig,
    SolveReport,
    Trajectory,
    fd_jacobian,
    integrate,
    integrate_final_state,
    read_trajectory_csv,
    refine_zero_crossings,
    solve_root,
    write_trajectory_csv,
)
from .oscillator import OscillatorConfig, OscillatorProblem
from .problems import IndirectProblem, evaluate_residual, solve_problem
from .smoothing import (
    ControlBounds,
    FilterKind,
    SmoothingFilter,
    sat_l2,
    sat_tanh,
    smooth_control,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ControlBounds",
    "FilterKind",
    "SmoothingFilter",
    "sat_l2",
    "sat_tanh",
    "smooth_control",
    "EvaluationError",
    "IntegratorConfig",
    "RootSolveConfig",
    "SolveReport",
    "Trajectory",
    "fd_jacobian",
    "integrate",
    "integrate_final_state",
    "read_trajectory_csv",
    "refine_zero_crossings",
    "solve_root",
    "write_trajectory_csv",
    "IndirectProblem",
    "evaluate_residual",
    "solve_problem",
    "OscillatorConfig",
    "OscillatorProblem",
    "DegenerateDirectionError",
    "LowThrustProblem",
    "MeeState",
    "SpacecraftParams",
    "TransferBoundary",
    "count_revolutions",
    "fuel_consumed",
    "lowthrust_aug_dynamics",
    "lowthrust_residual",
    "mee_matrices",
    "switching_function",
    "thrust_direction",
    "DEFAULT_FLOORS",
    "ContinuationReport",
    "ContinuationSchedule",
    "continue_solve",
    "GuessDomain",
    "MonteCarloStats",
    "read_records_jsonl",
    "run_monte_carlo",
    "summarize",
    "write_records_csv",
    "write_records_jsonl",
    "write_stats_json",
]
