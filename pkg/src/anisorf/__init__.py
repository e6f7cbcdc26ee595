"""Asymptotic errors of random-feature models on block-anisotropic Gaussian data."""

from .blockspectra import (BlockSpectrumSpec, ResolventPoint, empirical_resolvent,
                           solve_block_resolvent)
from .gaussmoments import (Activation, KappaSet, Quadrature, expect_gaussian,
                           gauss_hermite, kappa_constants)
from .montecarlo import (FeatureMap, SyntheticDataset, TrainedStudent,
                         empirical_errors, empirical_order_params,
                         get_covariance_check, logistic_fit, ridge_fit,
                         sample_dataset, sample_feature_map)
from .replica import (BlockModel, Channel, HatParams, OrderParams, SaddleSolution,
                      ScalarStats, energetic_update, entropic_update, proximal,
                      scalar_stats, solve_saddle_point, teacher_partition,
                      test_error, train_error)

__version__ = "0.1.0"

__all__ = [
    "Activation", "BlockModel", "BlockSpectrumSpec", "Channel", "FeatureMap",
    "HatParams", "KappaSet", "OrderParams", "Quadrature", "ResolventPoint",
    "SaddleSolution", "ScalarStats", "SyntheticDataset", "TrainedStudent",
    "empirical_errors", "empirical_order_params", "empirical_resolvent",
    "energetic_update", "entropic_update", "expect_gaussian", "gauss_hermite",
    "get_covariance_check", "kappa_constants", "logistic_fit", "proximal",
    "ridge_fit", "sample_dataset", "sample_feature_map", "scalar_stats",
    "solve_block_resolvent", "solve_saddle_point", "teacher_partition",
    "test_error", "train_error",
]
