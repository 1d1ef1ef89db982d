"""spcekit: stochastic polynomial chaos expansion surrogates.

Fits polynomial-chaos surrogates with a latent variable and additive noise
to single-evaluation data from stochastic simulators, then post-processes
the result for sampling, moments, sensitivity indices, and distribution-level
validation.
"""
from .basis import MultiIndexSet, eval_design_matrix, hyperbolic_set, mean_subset
from .distributions import Marginal
from .exceptions import (
    ConditioningError,
    ConfigurationError,
    FitError,
    NumericalError,
    SpcekitError,
    ValidationError,
)
from .linreg import OlsFit, hybrid_lar, ols_fit
from .orthopoly import (
    PolyFamily,
    QuadratureRule,
    eval_poly,
    family_for_marginal,
    gauss_rule,
    stieltjes,
)
from .postproc import (
    QuantileGrid,
    SobolReport,
    conditional_pdf,
    error_metric,
    mean_function,
    oracle_normal_error,
    quantiles_from_samples,
    sample_conditional,
    sample_unconditional,
    sobol_indices,
    variance_function,
    variance_shares,
    wasserstein2,
)
from .simulators import (
    Dataset,
    SirState,
    bimodal_draw,
    gbm_draw,
    lhs_design,
    make_dataset,
    reference_quantiles,
    sir_run,
)
from .spce import (
    FitReport,
    SpceModel,
    adaptive_build,
    cv_sigma_score,
    mle_fit,
    neg_log_likelihood,
    point_likelihood,
    select_sigma,
    warm_start_fit,
)

__version__ = "0.1.0"
