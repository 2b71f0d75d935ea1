"""Differentially private confidence intervals for stratified proportions.

Zero-concentrated DP interval mechanisms for population proportions under
stratified random sampling, a deterministic finite-population simulation
harness, and closed-form variance/width comparison tools.
"""

from .analysis import (
    CV_NORMAL_APPROX_THRESHOLD,
    ReciprocalMomentSeries,
    WidthRatioReport,
    budget_ratio_private_vs_public,
    budget_ratio_stratum_vs_population,
    conditional_reciprocal_moments_quadrature,
    denominator_cv,
    extrinsic_variance,
    ratio_estimator_k2_moments,
    reciprocal_normal_moments,
    sampling_weights,
    theoretical_width_ratio,
    truncated_even_moment,
    width_ratio_lower_bound,
    width_ratio_report,
)
from .core import (
    AlgorithmTag,
    CiResult,
    ClipFlags,
    InfeasibleError,
    PrivacyBudget,
    StratumCounts,
    StratumDesign,
    ValidationError,
    build_design,
    build_design_with_weights,
    compose_budgets,
    normal_cdf,
    normal_quantile,
)
from .dp_ci import (
    PrivateStratumRelease,
    RatioApproximationWarning,
    difference_ci,
    population_noise_public_sizes,
    stratum_noise_private_sizes,
    stratum_noise_public_sizes,
)
from .estimators import (
    NonPrivateEstimate,
    exact_stratum_variance,
    non_private_ci,
    non_private_estimate,
    sample_proportions,
    stratum_variance_estimate,
    wald_interval,
)
from .mechanisms import MechanismOutput, SensitivityReport, gaussian_mechanism, sensitivities
from .randomness import RandomStream, derive_stream, gaussian, hypergeometric_count
from .simharness import (
    AlgorithmSummary,
    ExperimentConfig,
    ExperimentSummary,
    Population,
    RepetitionRecord,
    Uniform,
    draw_sample,
    generate_population,
    qq_data,
    rho_sweep,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSummary",
    "AlgorithmTag",
    "CV_NORMAL_APPROX_THRESHOLD",
    "CiResult",
    "ClipFlags",
    "ExperimentConfig",
    "ExperimentSummary",
    "InfeasibleError",
    "MechanismOutput",
    "NonPrivateEstimate",
    "Population",
    "PrivacyBudget",
    "PrivateStratumRelease",
    "RandomStream",
    "RatioApproximationWarning",
    "ReciprocalMomentSeries",
    "RepetitionRecord",
    "SensitivityReport",
    "StratumCounts",
    "StratumDesign",
    "Uniform",
    "ValidationError",
    "WidthRatioReport",
    "budget_ratio_private_vs_public",
    "budget_ratio_stratum_vs_population",
    "build_design",
    "build_design_with_weights",
    "compose_budgets",
    "conditional_reciprocal_moments_quadrature",
    "denominator_cv",
    "derive_stream",
    "difference_ci",
    "draw_sample",
    "exact_stratum_variance",
    "extrinsic_variance",
    "gaussian",
    "gaussian_mechanism",
    "generate_population",
    "hypergeometric_count",
    "non_private_ci",
    "non_private_estimate",
    "normal_cdf",
    "normal_quantile",
    "population_noise_public_sizes",
    "qq_data",
    "ratio_estimator_k2_moments",
    "reciprocal_normal_moments",
    "rho_sweep",
    "run_experiment",
    "sample_proportions",
    "sampling_weights",
    "sensitivities",
    "stratum_noise_private_sizes",
    "stratum_noise_public_sizes",
    "stratum_variance_estimate",
    "theoretical_width_ratio",
    "truncated_even_moment",
    "wald_interval",
    "width_ratio_lower_bound",
    "width_ratio_report",
]
