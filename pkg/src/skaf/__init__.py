"""Streaming kernel analog forecasting with random Fourier features.

The main entry points are :func:`skaf.kaf.train_streaming` and
:func:`skaf.kaf.forecast`; :mod:`skaf.dynamics` generates Lorenz test
data and :mod:`skaf.metrics` scores forecasts.
"""

from .dynamics import L63Params, L96Params, Trajectory, generate, slow_vars, split_test_chain
from .features import FeatureMap, GaussianKernel, featurize, kernel_matrix, rff_new
from .kaf import (
    ForecastModel,
    PairedStream,
    TrainConfig,
    forecast,
    recommended_features,
    train_family,
    train_linear,
    train_naive,
    train_streaming,
)
from .metrics import RmseCurve, evaluate_curve, normalized_rmse
from .nystrom import NystromConfig, choose_rank, feat_nystrom

__version__ = "0.1.0"

__all__ = [
    "FeatureMap", "ForecastModel", "GaussianKernel", "L63Params", "L96Params", "NystromConfig",
    "PairedStream", "RmseCurve", "TrainConfig", "Trajectory", "choose_rank", "evaluate_curve",
    "feat_nystrom", "featurize", "forecast", "generate", "kernel_matrix", "normalized_rmse",
    "recommended_features", "rff_new", "slow_vars", "split_test_chain", "train_family",
    "train_linear", "train_naive", "train_streaming",
]
