"""Index-dependent supervised principal component classification.

Binary classification for high-dimensional observations whose class
moments drift with a scalar index (age, tumor size, time, ...).  Kernel
smoothing estimates local class means and covariances at any query index;
the leading eigenvectors of the pooled covariance inflated along the
local mean gap give a low-dimensional supervised projection; a linear or
quadratic discriminant in that projection labels the query.  Bandwidths
come from leave-one-out cross-validation, the spike weight and projection
dimension from stratified K-fold cross-validation.
"""

__version__ = "0.1.0"

from .classifier import (
    DiscriminantRule,
    Hyperparameters,
    PredictionResult,
    lda_score,
    local_rule,
    predict,
    predict_detailed,
    qda_score,
)
from .dataset import (
    Dataset,
    IndexMap,
    Observation,
    load_csv,
    normalize_index,
    save_csv,
    stratified_split,
    t_test_screen,
)
from .errors import DspcaError
from .kernel import (
    Bandwidths,
    KernelSpec,
    LocalMoments,
    default_bandwidth_grid,
    kernel_weight,
    local_moments,
    loocv_cov_error,
    loocv_mean_error,
    nw_class_cov,
    nw_mean,
    select_bandwidths,
)
from .simulation import (
    BenchmarkResult,
    SimulationModelSpec,
    generate,
    model_spec,
    oracle_predict,
    run_benchmark,
)
from .spectral import (
    FactorMatrix,
    ProjectionBasis,
    TotalCovariance,
    factor_matrix,
    subspace_distance,
    top_eigenvectors,
    total_cov,
)
from .tuning import CvReport, TuningGrid, cv_select, default_grid

__all__ = [
    "__version__",
    "Bandwidths",
    "BenchmarkResult",
    "CvReport",
    "Dataset",
    "DiscriminantRule",
    "DspcaError",
    "FactorMatrix",
    "Hyperparameters",
    "IndexMap",
    "KernelSpec",
    "LocalMoments",
    "Observation",
    "PredictionResult",
    "ProjectionBasis",
    "SimulationModelSpec",
    "TotalCovariance",
    "TuningGrid",
    "cv_select",
    "default_bandwidth_grid",
    "default_grid",
    "factor_matrix",
    "generate",
    "kernel_weight",
    "lda_score",
    "load_csv",
    "local_moments",
    "local_rule",
    "loocv_cov_error",
    "loocv_mean_error",
    "model_spec",
    "normalize_index",
    "nw_class_cov",
    "nw_mean",
    "oracle_predict",
    "predict",
    "predict_detailed",
    "qda_score",
    "run_benchmark",
    "save_csv",
    "select_bandwidths",
    "stratified_split",
    "subspace_distance",
    "t_test_screen",
    "top_eigenvectors",
    "total_cov",
]
