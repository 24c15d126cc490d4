"""Partitioned functional ridge regression for scalar-on-function models.

Block-penalized spline estimators with generalized cross-validation,
adaptive-ridge partition recovery, asymptotic inference for linear
functionals, and a seeded Monte Carlo study driver.
"""

from .basis import (
    BasisSpec,
    KnotVector,
    PenaltySpec,
    basis_matrix,
    diff_penalty,
    eval_basis,
    gram_matrix,
    make_knots,
    project_trajectory,
    quad_weights,
)
from .design import BlockLayout, DesignSystem, FunctionalDataset, build_design, predict
from .errors import (
    ConditioningError,
    DomainError,
    FunridgeError,
    SelectionError,
    ValidationError,
)
from .estimators import (
    FitResult,
    condition_number,
    fit_fre,
    fit_frfm,
    fit_frsm,
    frfm_penalty,
    hat_matrix_trace,
    imse_decomposition,
    solve_penalized,
    uniform_penalty,
    weighted_penalty,
)
from .inference import (
    InferenceResult,
    confidence_interval,
    estimate_functional,
    functional_weights,
    sigma2_hat,
    variance_of_functional,
)
from .partition import PartitionResult, adaptive_ridge_partition, partition_metrics
from .simulation import (
    EstimatorBases,
    ReplicationRecord,
    SimulationConfig,
    StudyReport,
    ar1_covariance,
    generate_dataset,
    imse_metric,
    run_replication,
    run_study,
    true_beta,
)
from .tuning import GcvTrace, LambdaGrid, gcv_score, select_lambda, tune_fre, tune_frfm

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "KnotVector",
    "PenaltySpec",
    "basis_matrix",
    "diff_penalty",
    "eval_basis",
    "gram_matrix",
    "make_knots",
    "project_trajectory",
    "quad_weights",
    "BlockLayout",
    "DesignSystem",
    "FunctionalDataset",
    "build_design",
    "predict",
    "ConditioningError",
    "DomainError",
    "FunridgeError",
    "SelectionError",
    "ValidationError",
    "FitResult",
    "condition_number",
    "fit_fre",
    "fit_frfm",
    "fit_frsm",
    "frfm_penalty",
    "hat_matrix_trace",
    "imse_decomposition",
    "solve_penalized",
    "uniform_penalty",
    "weighted_penalty",
    "InferenceResult",
    "confidence_interval",
    "estimate_functional",
    "functional_weights",
    "sigma2_hat",
    "variance_of_functional",
    "PartitionResult",
    "adaptive_ridge_partition",
    "partition_metrics",
    "EstimatorBases",
    "ReplicationRecord",
    "SimulationConfig",
    "StudyReport",
    "ar1_covariance",
    "generate_dataset",
    "imse_metric",
    "run_replication",
    "run_study",
    "true_beta",
    "GcvTrace",
    "LambdaGrid",
    "gcv_score",
    "select_lambda",
    "tune_fre",
    "tune_frfm",
]
