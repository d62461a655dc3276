"""Inverse stochastic optimal control for signal-dependent-noise LQ models.

Forward problem: alternating-optimization solver for linear systems with
control-dependent plant noise and state-dependent observation noise, exact
closed-loop moment propagation and Monte Carlo simulation.  Inverse problem:
VAF-based objective over observed moment trajectories, optimized by filtered
multistart (distance + region-of-attraction filters) over a box of cost and
noise parameters.
"""

from .model import (
    CostStructure,
    FeasibleSet,
    LqsSystem,
    NoiseMatrices,
    ProblemArrays,
    SigmaPattern,
    StaticArrays,
    ThetaLayout,
    ThetaVector,
    assemble_cost,
    assemble_noise,
    materialize_problem,
)
from .moments import (
    MomentTrajectory,
    export_moments_csv,
    load_moments_csv,
    propagate_moments,
    restrict_moments,
)
from .objective import (
    DegenerateChannelError,
    GroundTruthData,
    IsocObjective,
    ObjectiveValue,
    evaluate_j_isoc,
    finite_diff_gradient,
    vaf_cov,
    vaf_mean,
)
from .optimizer import (
    LocalSolverConfig,
    RunRecord,
    StartRecord,
    TrlConfig,
    compute_alpha,
    distance_filter,
    draw_samples,
    local_solve,
    pure_multistart,
    roa_filter,
    sampling_success_probability,
    trlwaroa,
)
from .reaching import ReachingExample, build_reaching_example
from .simulate import (
    TrajectoryBatch,
    bootstrap_cov_standard_error,
    estimate_moments,
    mean_standard_error,
    simulate_batch,
)
from .soc import (
    AoConfig,
    AoNonConvergenceError,
    AoSolution,
    GainComputationError,
    GainSchedule,
    SocSolverError,
    control_pass,
    evaluate_expected_cost,
    filter_pass,
    lqg_filter_gains,
    solve_ao,
    value_route_cost,
)
from .experiments import (
    CONVERGED_J_THRESHOLD,
    ExperimentConfig,
    ExperimentResult,
    SliceScanResult,
    SurfaceFit,
    aggregate_records,
    fit_polynomial_surface,
    generate_gt,
    ray_scan,
    run_experiment,
    run_identification,
    slice_scan,
    sweep_experiments,
)

__version__ = "0.1.0"

__all__ = [
    "AoConfig",
    "AoNonConvergenceError",
    "AoSolution",
    "CONVERGED_J_THRESHOLD",
    "CostStructure",
    "DegenerateChannelError",
    "ExperimentConfig",
    "ExperimentResult",
    "FeasibleSet",
    "GainComputationError",
    "GainSchedule",
    "GroundTruthData",
    "IsocObjective",
    "LocalSolverConfig",
    "LqsSystem",
    "MomentTrajectory",
    "NoiseMatrices",
    "ObjectiveValue",
    "ProblemArrays",
    "ReachingExample",
    "RunRecord",
    "SigmaPattern",
    "SliceScanResult",
    "SocSolverError",
    "StartRecord",
    "StaticArrays",
    "SurfaceFit",
    "ThetaLayout",
    "ThetaVector",
    "TrajectoryBatch",
    "TrlConfig",
    "aggregate_records",
    "assemble_cost",
    "assemble_noise",
    "bootstrap_cov_standard_error",
    "build_reaching_example",
    "compute_alpha",
    "control_pass",
    "distance_filter",
    "draw_samples",
    "estimate_moments",
    "evaluate_expected_cost",
    "evaluate_j_isoc",
    "filter_pass",
    "finite_diff_gradient",
    "fit_polynomial_surface",
    "generate_gt",
    "load_moments_csv",
    "local_solve",
    "lqg_filter_gains",
    "materialize_problem",
    "mean_standard_error",
    "propagate_moments",
    "pure_multistart",
    "ray_scan",
    "restrict_moments",
    "roa_filter",
    "run_experiment",
    "run_identification",
    "sampling_success_probability",
    "simulate_batch",
    "slice_scan",
    "solve_ao",
    "sweep_experiments",
    "trlwaroa",
    "vaf_cov",
    "vaf_mean",
    "value_route_cost",
]
