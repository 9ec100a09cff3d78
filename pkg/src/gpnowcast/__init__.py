"""Nowcasting a slow-cadence survey index from fast covariates.

The core loop slides a fixed-length training window over history, fits a
Matern-3/2 Gaussian process from covariates to survey values inside the
window, and predicts the next unseen point with a calibrated variance.
Everything else in the package supports that loop: synthetic data with
known ground truth, feature aggregation for raw per-post inputs, error
and co-movement metrics, and a CLI with replayable run manifests.
"""

from .errors import (
    ConfigError,
    DegenerateDataError,
    DegenerateLabelsError,
    EmptyEvaluationError,
    InsufficientDataError,
    InsufficientHistoryError,
    MissingDataError,
    NowcastError,
    SchemaError,
    SingularMatrixError,
    TrainingError,
    UndefinedCorrelationError,
)
from .frame import ExperimentConfig, Prediction, TimeSeriesFrame
from .gpr import GprModel, cholesky_psd, fit, log_marginal_likelihood, predict, train
from .kernel import KernelHyperparams, kernel_matrix, matern32
from .metrics import MetricsRecord, dcca, evaluate, mae, pearson, rmse
from .monitor import (
    MonitorResult,
    ReductionResult,
    WindowSpec,
    baseline_single_feature,
    baseline_time_only,
    gprm,
    reduction_mask,
    run_monitor,
    run_survey_reduction,
    run_with_missing,
    window_plan,
)
from .pipeline import (
    KmeansResult,
    PcaProjection,
    PostRecord,
    UserTrustModel,
    aggregate,
    aggregate_series,
    calibrate_exponential,
    filter_clusters,
    kmeans_cluster,
    pca_fit,
    pca_inverse_transform,
    pca_transform,
    smooth,
    train_trust,
)
from .synth import SynthSpec, generate, gp_sample, oracle_predict

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateDataError",
    "DegenerateLabelsError",
    "EmptyEvaluationError",
    "ExperimentConfig",
    "GprModel",
    "InsufficientDataError",
    "InsufficientHistoryError",
    "KernelHyperparams",
    "KmeansResult",
    "MetricsRecord",
    "MissingDataError",
    "MonitorResult",
    "NowcastError",
    "PcaProjection",
    "PostRecord",
    "Prediction",
    "ReductionResult",
    "SchemaError",
    "SingularMatrixError",
    "SynthSpec",
    "TimeSeriesFrame",
    "TrainingError",
    "UndefinedCorrelationError",
    "UserTrustModel",
    "WindowSpec",
    "aggregate",
    "aggregate_series",
    "baseline_single_feature",
    "baseline_time_only",
    "calibrate_exponential",
    "cholesky_psd",
    "dcca",
    "evaluate",
    "filter_clusters",
    "fit",
    "generate",
    "gp_sample",
    "gprm",
    "kernel_matrix",
    "kmeans_cluster",
    "log_marginal_likelihood",
    "mae",
    "matern32",
    "oracle_predict",
    "pca_fit",
    "pca_inverse_transform",
    "pca_transform",
    "pearson",
    "predict",
    "reduction_mask",
    "rmse",
    "run_monitor",
    "run_survey_reduction",
    "run_with_missing",
    "smooth",
    "train",
    "train_trust",
    "window_plan",
    "__version__",
]
