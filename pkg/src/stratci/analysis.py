"""Closed-form comparison toolkit.

Extrinsic variances (the variance privacy noise adds on top of sampling
variance), budget ratios between mechanisms, theoretical width ratios with
their lower bounds, and the conditional-moment machinery for the reciprocal
of a normal variable that underpins the private-sizes variance estimate.

The quadrature routines come first: they are the independent oracle the
truncated series is checked against, built before the series and kept free
of any series code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from scipy.integrate import quad

from .core import AlgorithmTag, PrivacyBudget, StratumDesign, ValidationError

CV_NORMAL_APPROX_THRESHOLD = 0.1

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)

# Standard-normal mass beyond 40 sigma is ~1e-349, far below every tolerance
# used here, so integration limits are clamped there.
_T_CLAMP = 40.0


def _phi(t: float) -> float:
    return math.exp(-0.5 * t * t) / _SQRT_2PI


def denominator_cv(sample_size: int, rho2: float) -> float:
    """Coefficient of variation of the noisy size n + N(0, 1/(2 rho2)).

    Values at or above :data:`CV_NORMAL_APPROX_THRESHOLD` mean the normal
    approximation for the count/size ratio is unreliable (rule of thumb).
    """
    return math.sqrt(1.0 / (2.0 * rho2)) / sample_size


def conditional_reciprocal_moments_quadrature(mu: float, sigma: float) -> tuple[float, float]:
    """E(1/X | S) and E(1/X^2 | S) for X ~ N(mu, sigma^2), S = {1 <= X <= 2mu-1}.

    Adaptive Gauss-Kronrod quadrature of the truncated-normal integrands in
    standardized coordinates, normalized by the truncated mass.  Requested
    relative tolerance 1e-13 (hence absolute error well below 1e-12 on these
    sub-unit values).
    """
    if not mu > 1.0:
        raise ValidationError(f"mu must exceed 1, got {mu}")
    if not sigma > 0.0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    lim = min((mu - 1.0) / sigma, _T_CLAMP)
    mass = math.erf(lim / _SQRT2)
    mean_num, _ = quad(
        lambda t: _phi(t) / (mu + sigma * t), -lim, lim,
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    second_num, _ = quad(
        lambda t: _phi(t) / (mu + sigma * t) ** 2, -lim, lim,
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return mean_num / mass, second_num / mass


def truncated_even_moment(mu: float, sigma: float, half_width: float, order: int) -> float:
    """E[(X - mu)^(2k) | mu - a <= X <= mu + a] by quadrature.

    Equals sigma^(2k) (2k-1)!! up to a boundary term of size
    O(exp(-a^2 / (2 sigma^2)) a^(2k-1)).
    """
    if not half_width > 0.0:
        raise ValidationError(f"half_width must be positive, got {half_width}")
    if order < 1:
        raise ValidationError(f"order must be a positive integer, got {order}")
    lim = min(half_width / sigma, _T_CLAMP)
    mass = math.erf(lim / _SQRT2)
    k2 = 2 * order
    num, _ = quad(
        lambda t: (sigma * t) ** k2 * _phi(t), -lim, lim,
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return num / mass


def double_factorial(n: int) -> int:
    """n!! for odd n >= -1, with (-1)!! = 1."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


class ReciprocalMomentSeries(NamedTuple):
    """Truncated expansions of the conditional reciprocal-normal moments."""

    mean: float
    second_moment: float
    error_order: float  # size of the first omitted order, (sigma/mu)^(2k+2)


def reciprocal_normal_moments(mu: float, sigma: float, k: int) -> ReciprocalMomentSeries:
    """Order-k expansions of E(1/X | S) and E(1/X^2 | S), S = {1 <= X <= 2mu-1}.

    mean  = (1/mu)   * sum_{j=0..k} (2j-1)!! (sigma/mu)^(2j)
    second = (1/mu^2) * sum_{j=0..k} (2j+1)!! (sigma/mu)^(2j)

    with remainder O((sigma/mu)^(2k+2)); the j = 0 mean term is 1/mu by the
    (-1)!! = 1 convention.
    """
    if not mu > 1.0:
        raise ValidationError(f"mu must exceed 1, got {mu}")
    if not sigma > 0.0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if k < 0:
        raise ValidationError(f"k must be a nonnegative integer, got {k}")
    r2 = (sigma / mu) ** 2
    mean = 0.0
    second = 0.0
    r2j = 1.0
    for j in range(k + 1):
        mean += double_factorial(2 * j - 1) * r2j
        second += double_factorial(2 * j + 1) * r2j
        r2j *= r2
    return ReciprocalMomentSeries(mean / mu, second / (mu * mu), r2j)


def ratio_estimator_k2_moments(
    p: float, n: int, population_size: int, rho1: float, rho2: float
) -> tuple[float, float]:
    """Order-2 conditional mean and variance of the noisy-count/noisy-size ratio.

    For c drawn without replacement at true proportion p, c_tilde = c +
    N(0, 1/(2 rho1)), n_tilde = n + N(0, 1/(2 rho2)), conditioned on the
    symmetric event {1 <= n_tilde <= 2n - 1}:

    mean     = p * sum_{j=0..2} (2j-1)!! x^j,       x = 1 / (2 n^2 rho2)
    variance = Var(p_hat) * sum (2j+1)!! x^j
               + p^2 * (sum (2j+1)!! x^j - (sum (2j-1)!! x^j)^2)
               + (1/(2 rho1 n^2)) * sum (2j+1)!! x^j

    The leading bias p x = p / (2 n^2 rho2) is the term the private-sizes
    mechanism leaves uncorrected (it vanishes under rho2 >> 1/n).
    """
    if n < 2:
        raise ValidationError(f"sample size must be at least 2, got {n}")
    if not (rho1 > 0.0 and rho2 > 0.0):
        raise ValidationError("rho1 and rho2 must be positive")
    N = population_size
    var_phat = ((N - n) / (N - 1)) * p * (1.0 - p) / n
    x = 1.0 / (2.0 * n * n * rho2)
    odd = sum(double_factorial(2 * j - 1) * x**j for j in range(3))   # 1 + x + 3x^2
    even = sum(double_factorial(2 * j + 1) * x**j for j in range(3))  # 1 + 3x + 15x^2
    mean = p * odd
    variance = (
        var_phat * even
        + p * p * (even - odd * odd)
        + (1.0 / (2.0 * rho1 * n * n)) * even
    )
    return mean, variance


def sampling_weights(design: Sequence[StratumDesign]) -> tuple[float, ...]:
    """u_h = N_h / n_h for each stratum."""
    return tuple(s.sampling_weight for s in design)


def extrinsic_variance(
    design: Sequence[StratumDesign],
    algorithm: AlgorithmTag,
    budget: PrivacyBudget,
    stratum_proportions: Sequence[float] | None = None,
) -> float:
    """Variance added by privacy noise on top of the sampling variance.

    Stratum noise, public sizes:   (1/(2 rho))  * sum_h w_h^2 / n_h^2
    Population noise:              (1/(2 rho1)) * max_h w_h^2 / n_h^2
    Stratum noise, private sizes:  (1/(2 rho1)) * sum_h w_h^2 / n_h^2
                                 + (1/(2 rho2)) * sum_h w_h^2 p_h^2 / n_h^2
    """
    wn2 = [(s.weight / s.sample_size) ** 2 for s in design]
    if algorithm is AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES:
        return sum(wn2) / (2.0 * budget.rho)
    if algorithm is AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES:
        return max(wn2) / (2.0 * budget.rho1)
    if algorithm is AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES:
        if stratum_proportions is None:
            raise ValidationError(
                "stratum proportions are required for the private-sizes extrinsic variance"
            )
        if len(stratum_proportions) != len(design):
            raise ValidationError("stratum proportions must pair with the design")
        return sum(wn2) / (2.0 * budget.rho1) + sum(
            v * p * p for v, p in zip(wn2, stratum_proportions)
        ) / (2.0 * budget.rho2)
    if algorithm is AlgorithmTag.NON_PRIVATE:
        return 0.0
    raise ValidationError(f"no extrinsic variance defined for {algorithm}")


def budget_ratio_stratum_vs_population(sampling_weights: Sequence[float]) -> float:
    """Extrinsic-variance ratio of stratum-level to population-level noise.

    sum u_h^2 / (2 max u_h^2) at the default even split; below 1 means
    stratum-level noise is cheaper, which stops holding once there are
    enough strata.
    """
    if not sampling_weights:
        raise ValidationError("at least one sampling weight is required")
    sq = [u * u for u in sampling_weights]
    return sum(sq) / (2.0 * max(sq))


def budget_ratio_private_vs_public(
    sampling_weights: Sequence[float], stratum_proportions: Sequence[float]
) -> float:
    """Extrinsic-variance ratio of private-sizes to public-sizes stratum noise.

    2 sum u_h^2 (1 + p_h^2) / sum u_h^2 at the even split; always in (2, 4],
    the factor-2 floor being the price of protecting sizes.
    """
    if not sampling_weights:
        raise ValidationError("at least one sampling weight is required")
    if len(sampling_weights) != len(stratum_proportions):
        raise ValidationError("weights and proportions must have equal length")
    sq = [u * u for u in sampling_weights]
    return 2.0 * sum(s * (1.0 + p * p) for s, p in zip(sq, stratum_proportions)) / sum(sq)


_TWR_P_FACTOR = {
    # multiplier on 1 / (p(1-p) n rho) inside the width-ratio formula,
    # assuming the even split for the two split-budget mechanisms
    AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES: lambda p: 0.5,
    AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES: lambda p: 1.0,
    AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES: lambda p: 1.0 + p * p,
}

_TWR_BOUND_FACTOR = {
    # numerator of the lower bound term, minimized over p with the
    # finite-population factor dropped
    AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES: 2.0,
    AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES: 4.0,
    AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES: 2.0 * (1.0 + math.sqrt(2.0)),
}


def theoretical_width_ratio(
    population_size: int, sample_size: int, p: float, rho: float, algorithm: AlgorithmTag
) -> float:
    """sqrt(Var(p_tilde)/Var(p_hat)) for a one-stratum design at even split.

    sqrt(1 + ((N-1)/(N-n)) * factor / (p (1-p) n rho)) with factor 1/2, 1,
    or 1 + p^2 depending on where noise enters.
    """
    if algorithm is AlgorithmTag.NON_PRIVATE:
        return 1.0
    if algorithm not in _TWR_P_FACTOR:
        raise ValidationError(f"no width ratio defined for {algorithm}")
    if not (0.0 < p < 1.0):
        raise ValidationError(f"p must lie strictly inside (0, 1), got {p}")
    if sample_size >= population_size:
        raise ValidationError("width ratio requires sample_size < population_size")
    if not rho > 0.0:
        raise ValidationError(f"rho must be positive, got {rho}")
    N, n = population_size, sample_size
    factor = _TWR_P_FACTOR[algorithm](p)
    return math.sqrt(1.0 + ((N - 1) / (N - n)) * factor / (p * (1.0 - p) * n * rho))


def width_ratio_lower_bound(sample_size: int, rho: float, algorithm: AlgorithmTag) -> float:
    """Lower bound on the theoretical width ratio over all N and p.

    sqrt(1 + 2/(n rho)), sqrt(1 + 4/(n rho)), sqrt(1 + 2(1+sqrt 2)/(n rho)).
    Attained as N -> infinity at p = 1/2 for the public-sizes mechanisms and
    at p = sqrt(2) - 1 for the private-sizes one.
    """
    if algorithm is AlgorithmTag.NON_PRIVATE:
        return 1.0
    if algorithm not in _TWR_BOUND_FACTOR:
        raise ValidationError(f"no width-ratio bound defined for {algorithm}")
    if not rho > 0.0:
        raise ValidationError(f"rho must be positive, got {rho}")
    return math.sqrt(1.0 + _TWR_BOUND_FACTOR[algorithm] / (sample_size * rho))


@dataclass(frozen=True)
class WidthRatioReport:
    """Side-by-side width/variance comparison for one design.

    ``width_ratios`` and ``lower_bounds`` are populated only for one-stratum
    designs, where the closed forms apply.
    """

    extrinsic_variances: tuple[tuple[AlgorithmTag, float], ...]
    width_ratios: tuple[tuple[AlgorithmTag, float], ...]
    lower_bounds: tuple[tuple[AlgorithmTag, float], ...]
    ratio_stratum_vs_population: float
    ratio_private_vs_public: float | None
    sampling_weights: tuple[float, ...]


_PRIVATE_TAGS = (
    AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES,
    AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES,
    AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES,
)


def width_ratio_report(
    design: Sequence[StratumDesign],
    budget: PrivacyBudget,
    stratum_proportions: Sequence[float] | None = None,
) -> WidthRatioReport:
    """Assemble the comparison quantities for a design in one pass."""
    u = sampling_weights(design)
    vex = []
    for tag in _PRIVATE_TAGS:
        if tag is AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES and stratum_proportions is None:
            continue
        vex.append((tag, extrinsic_variance(design, tag, budget, stratum_proportions)))
    twr: list[tuple[AlgorithmTag, float]] = []
    bounds: list[tuple[AlgorithmTag, float]] = []
    if len(design) == 1 and stratum_proportions is not None:
        stratum = design[0]
        p = stratum_proportions[0]
        for tag in _PRIVATE_TAGS:
            twr.append(
                (tag, theoretical_width_ratio(
                    stratum.population_size, stratum.sample_size, p, budget.rho, tag
                ))
            )
            bounds.append((tag, width_ratio_lower_bound(stratum.sample_size, budget.rho, tag)))
    ratio_priv = (
        budget_ratio_private_vs_public(u, stratum_proportions)
        if stratum_proportions is not None
        else None
    )
    return WidthRatioReport(
        extrinsic_variances=tuple(vex),
        width_ratios=tuple(twr),
        lower_bounds=tuple(bounds),
        ratio_stratum_vs_population=budget_ratio_stratum_vs_population(u),
        ratio_private_vs_public=ratio_priv,
        sampling_weights=u,
    )
