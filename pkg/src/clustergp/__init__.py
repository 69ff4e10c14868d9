"""Clustered Gaussian process emulation via stochastic EM.

The two estimators are the public face of the package; the underlying
fitting, prediction and persistence helpers are importable from their
modules for programmatic use.
"""

from .bench import TEST_FUNCTIONS, maximin_lhd, run_benchmark
from .estimators import ClusteredGP, StationaryGP
from .exceptions import (
    ClusterGpError,
    CsvFormatError,
    DegenerateCluster,
    DuplicatedPoints,
    InfeasibleK,
    KTooLarge,
    ModelFormatError,
    QOutOfRange,
)
from .gp import fit_gp, gp_predict_batch, loocv_means
from .model_io import load_model, save_model
from .predict import (
    PredictiveMixture,
    mixture_cdf,
    mixture_mean_var,
    mixture_quantile,
    predictive_mixture,
)
from .sem import SemConfig, SemTrace, fit_clustered_gp, loocv_rmse, select_k

__version__ = "0.1.0"

__all__ = [
    "ClusteredGP",
    "StationaryGP",
    "SemConfig",
    "SemTrace",
    "fit_clustered_gp",
    "select_k",
    "loocv_rmse",
    "fit_gp",
    "gp_predict_batch",
    "loocv_means",
    "PredictiveMixture",
    "predictive_mixture",
    "mixture_mean_var",
    "mixture_cdf",
    "mixture_quantile",
    "save_model",
    "load_model",
    "run_benchmark",
    "maximin_lhd",
    "TEST_FUNCTIONS",
    "ClusterGpError",
    "CsvFormatError",
    "DegenerateCluster",
    "DuplicatedPoints",
    "InfeasibleK",
    "KTooLarge",
    "ModelFormatError",
    "QOutOfRange",
    "__version__",
]
