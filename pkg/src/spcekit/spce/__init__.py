from .fit import (
    FitReport,
    SigmaSelection,
    adaptive_build,
    cv_sigma_score,
    make_folds,
    mle_fit,
    n_folds_for,
    select_sigma,
    sigma_schedule,
    warm_start_fit,
)
from .likelihood import (
    LikelihoodCache,
    conditional_density,
    neg_log_likelihood,
    point_likelihood,
)
from .model import SpceModel, default_nq, write_json_atomic

__all__ = [
    "FitReport",
    "LikelihoodCache",
    "SigmaSelection",
    "SpceModel",
    "adaptive_build",
    "conditional_density",
    "cv_sigma_score",
    "default_nq",
    "make_folds",
    "mle_fit",
    "n_folds_for",
    "neg_log_likelihood",
    "point_likelihood",
    "select_sigma",
    "sigma_schedule",
    "warm_start_fit",
    "write_json_atomic",
]
