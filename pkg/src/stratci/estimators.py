"""Non-private design-based estimation: stratified proportion and Wald CI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import (
    AlgorithmTag,
    CiResult,
    ClipFlags,
    PrivacyBudget,
    StratumCounts,
    StratumDesign,
    ValidationError,
    check_paired,
    normal_quantile,
)


@dataclass(frozen=True)
class NonPrivateEstimate:
    """Point and variance estimates, per stratum and aggregated.

    By construction ``proportion == sum(w_h * stratum_proportions[h])`` and
    ``variance == sum(w_h**2 * stratum_variances[h])`` exactly.
    """

    proportion: float
    stratum_proportions: tuple[float, ...]
    variance: float
    stratum_variances: tuple[float, ...]


def sample_proportions(
    design: Sequence[StratumDesign], counts: StratumCounts
) -> tuple[float, tuple[float, ...]]:
    """Return (p_hat, per-stratum p_hat_h) with p_hat_h = c_h / n_h."""
    check_paired(design, counts)
    per_stratum = tuple(c / s.sample_size for s, c in zip(design, counts.counts))
    overall = sum(s.weight * p for s, p in zip(design, per_stratum))
    return overall, per_stratum


def stratum_variance_estimate(stratum: StratumDesign, p_hat_h: float) -> float:
    """Unbiased within-stratum variance estimate (divides by n_h - 1).

    ((N_h - n_h) / N_h) * p_hat_h (1 - p_hat_h) / (n_h - 1).
    """
    N, n = stratum.population_size, stratum.sample_size
    return ((N - n) / N) * p_hat_h * (1.0 - p_hat_h) / (n - 1)


def exact_stratum_variance(stratum: StratumDesign, p_h: float) -> float:
    """Exact design variance of p_hat_h at true proportion p_h (divides by n_h).

    ((N_h - n_h) / (N_h - 1)) * p_h (1 - p_h) / n_h.  Distinct from
    :func:`stratum_variance_estimate`: this is the sampling-theory variance,
    not its plug-in estimator; the two use different finite-population
    corrections.
    """
    N, n = stratum.population_size, stratum.sample_size
    if N == 1:
        return 0.0
    return ((N - n) / (N - 1)) * p_h * (1.0 - p_h) / n


def non_private_estimate(
    design: Sequence[StratumDesign], counts: StratumCounts
) -> NonPrivateEstimate:
    """Full non-private estimate: proportions plus variance estimates."""
    overall, per_stratum = sample_proportions(design, counts)
    stratum_vars = tuple(
        stratum_variance_estimate(s, p) for s, p in zip(design, per_stratum)
    )
    variance = sum(s.weight**2 * v for s, v in zip(design, stratum_vars))
    return NonPrivateEstimate(overall, per_stratum, variance, stratum_vars)


def wald_interval(
    estimate: float,
    variance: float,
    alpha: float,
    *,
    algorithm: AlgorithmTag = AlgorithmTag.NON_PRIVATE,
    budget: PrivacyBudget | None = None,
    clipped: ClipFlags = ClipFlags(),
    noise_variances: tuple[tuple[str, float], ...] = (),
) -> CiResult:
    """estimate +/- z_{1-alpha/2} * sqrt(variance) as a CiResult."""
    if variance < 0.0:
        raise ValidationError(f"variance must be nonnegative, got {variance}")
    half_width = normal_quantile(1.0 - alpha / 2.0) * variance**0.5
    return CiResult(
        point_estimate=estimate,
        variance_estimate=variance,
        lower=estimate - half_width,
        upper=estimate + half_width,
        alpha=alpha,
        algorithm=algorithm,
        budget_spent=budget,
        clipped=clipped,
        noise_variances=noise_variances,
    )


def non_private_ci(
    design: Sequence[StratumDesign], counts: StratumCounts, alpha: float
) -> CiResult:
    """Classic stratified Wald interval from observed counts."""
    est = non_private_estimate(design, counts)
    return wald_interval(est.proportion, est.variance, alpha)
