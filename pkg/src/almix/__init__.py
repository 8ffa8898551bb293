"""Active learning for computer experiments with mixed inputs.

Surrogate modeling with an additive mixed-input Gaussian process,
acquisition criteria for optimization, contour estimation and prediction,
a bandit/GP hybrid over qualitative level combinations, adaptive-design
loops, and a replicated benchmark harness with a CLI front end.
"""

from .acquisition import (
    AcquisitionSpec,
    Selection,
    confidence_width,
    ecl,
    ei_contour,
    ei_min,
    ei_multi_contour,
    lcb,
    ucb,
)
from .adaptive_loop import LoopConfig, OneShotResult, Trace, run_adaptive, run_oneshot, run_rcc
from .design_space import (
    Dataset,
    DesignSpace,
    LevelCombination,
    MixedPoint,
    enumerate_level_combinations,
    validate_point,
)
from .emulator import (
    EzGPParams,
    FactorizationFailure,
    FitFailure,
    FitOptions,
    FittedEzGP,
    Posterior,
    fit,
    gram_matrix,
    kernel_phi,
    neg_log_likelihood,
    profiled_mean,
)
from .hybrid import HybridConfig, McTree, backprop, hybrid_step, kernel_rank_select, run_hybrid, uct_select
from .sampling import RngStream, candidate_set, initial_design, oneshot_design, random_lhd

__version__ = "0.1.0"

__all__ = [
    "AcquisitionSpec",
    "Dataset",
    "DesignSpace",
    "EzGPParams",
    "FactorizationFailure",
    "FitFailure",
    "FitOptions",
    "FittedEzGP",
    "HybridConfig",
    "LevelCombination",
    "LoopConfig",
    "McTree",
    "MixedPoint",
    "OneShotResult",
    "Posterior",
    "RngStream",
    "Selection",
    "Trace",
    "backprop",
    "candidate_set",
    "confidence_width",
    "ecl",
    "ei_contour",
    "ei_min",
    "ei_multi_contour",
    "enumerate_level_combinations",
    "fit",
    "gram_matrix",
    "hybrid_step",
    "initial_design",
    "kernel_phi",
    "kernel_rank_select",
    "lcb",
    "neg_log_likelihood",
    "oneshot_design",
    "profiled_mean",
    "random_lhd",
    "run_adaptive",
    "run_hybrid",
    "run_oneshot",
    "run_rcc",
    "ucb",
    "uct_select",
    "validate_point",
]
