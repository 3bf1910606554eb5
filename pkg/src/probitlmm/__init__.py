"""Bayesian probit linear mixed models under flexible precision priors.

Provides the two-block Gibbs sampler and its Haar parameter-expanded
variant, mechanical checks of posterior propriety and geometric
ergodicity, batch-means error estimation, and a quadrature oracle for
desk-scale validation.
"""

from .conditions import (
    ErgodicityReport,
    LPResult,
    ProprietyReport,
    check_propriety_power_prior,
    check_propriety_reduced_design,
    check_full_rank,
    check_geometric_ergodicity,
    check_positive_null_vector,
    gamma_ratio,
    grid_criterion,
)
from .diagnostics import (
    ComparisonReport,
    OracleResult,
    SummaryReport,
    batch_means,
    compare_algorithms,
    ess,
    oracle_posterior_mean,
    summarize,
)
from .linalg import (
    EigenDecomposition,
    PosteriorPrecision,
    build_precision,
    conditional_mean,
    check_s_inverse_bounds,
    residual_form_matrix,
    projection_X,
    projection_colspace,
    pseudo_inverse,
    sigma_inverse,
    sym_eigen,
)
from .model import (
    ModelValidationError,
    ObservationSet,
    PriorSpec,
    ProbitMixedModel,
    RandomEffectsStructure,
    SignedDesign,
    TransformedDesign,
    build_design,
    signed_design,
    simulate_data,
    transform_design,
)
from .sampler import (
    ChainOutput,
    ChainState,
    RefusedRunError,
    SamplerConfig,
    draw_eta,
    draw_gamma,
    draw_truncated_normal,
    gibbs_step,
    pxda_step,
    run_chain,
)

__version__ = "0.1.0"

__all__ = [
    "ChainOutput", "ChainState", "ComparisonReport", "EigenDecomposition",
    "ErgodicityReport", "LPResult", "ModelValidationError", "ObservationSet",
    "OracleResult", "PosteriorPrecision", "PriorSpec", "ProbitMixedModel",
    "ProprietyReport", "RandomEffectsStructure", "RefusedRunError",
    "SamplerConfig", "SignedDesign", "SummaryReport", "TransformedDesign",
    "batch_means", "build_design", "build_precision", "check_full_rank",
    "check_geometric_ergodicity", "check_propriety_power_prior",
    "check_propriety_reduced_design",
    "check_positive_null_vector", "check_s_inverse_bounds",
    "compare_algorithms", "conditional_mean",
    "draw_eta", "draw_gamma", "draw_truncated_normal", "ess", "gamma_ratio",
    "gibbs_step", "grid_criterion", "oracle_posterior_mean",
    "projection_X", "projection_colspace", "pseudo_inverse", "pxda_step",
    "residual_form_matrix", "run_chain", "sigma_inverse", "signed_design",
    "simulate_data", "summarize", "sym_eigen", "transform_design",
]
