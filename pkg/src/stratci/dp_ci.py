"""Differentially private confidence intervals for stratified proportions.

Three mechanisms are provided, differing in where noise enters and in which
design facts stay public:

* :func:`stratum_noise_public_sizes` — Gaussian noise on each stratum
  proportion; sample sizes public; single (unsplit) budget.  Satisfies
  rho-zCDP under substitute-one-within-a-stratum adjacency.
* :func:`population_noise_public_sizes` — noise on the aggregate proportion
  and on its variance estimate; budget split rho = rho1 + rho2.  Same
  adjacency.
* :func:`stratum_noise_private_sizes` — noise on each stratum's count and
  sample size; budget split rho = rho1 + rho2.  Satisfies rho-zCDP under
  remove/add-one adjacency, protecting the sizes themselves.

Each invocation owns a single stream and derives per-stratum substreams by
stratum index, so results do not depend on iteration order and repetitions
can run concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

from .analysis import CV_NORMAL_APPROX_THRESHOLD, denominator_cv
from .core import (
    AlgorithmTag,
    CiResult,
    ClipFlags,
    PrivacyBudget,
    StratumCounts,
    StratumDesign,
    ValidationError,
    check_paired,
)
from .estimators import non_private_estimate, wald_interval
from .mechanisms import gaussian_mechanism, sensitivities
from .randomness import RandomStream

NOISY_SIZE_FLOOR = 2.0


class RatioApproximationWarning(UserWarning):
    """Denominator noise is large enough to strain the normal approximation."""


@dataclass(frozen=True)
class PrivateStratumRelease:
    """Per-stratum private quantities released by the stratum-level mechanisms.

    ``noisy_count``/``noisy_size`` and their noise variances are populated
    only by the private-sizes mechanism.  ``variance`` is floored at zero, and
    ``fpc_floored`` marks a negative finite-population factor (noisy size
    exceeding the stratum population) that was zeroed.
    """

    proportion: float
    variance: float
    proportion_noise_variance: float | None = None
    noisy_count: float | None = None
    noisy_size: float | None = None
    count_noise_variance: float | None = None
    size_noise_variance: float | None = None
    proportion_clipped: bool = False
    variance_floored: bool = False
    noisy_size_floored: bool = False
    fpc_floored: bool = False


def _clip_unit(x: float) -> tuple[float, bool]:
    if x < 0.0:
        return 0.0, True
    if x > 1.0:
        return 1.0, True
    return x, False


def _floor_zero(v: float) -> tuple[float, bool]:
    return (0.0, True) if v < 0.0 else (v, False)


def _aggregate(
    design: Sequence[StratumDesign], releases: Sequence[PrivateStratumRelease]
) -> tuple[float, float]:
    point = sum(s.weight * r.proportion for s, r in zip(design, releases))
    variance = sum(s.weight**2 * r.variance for s, r in zip(design, releases))
    return point, variance


def stratum_noise_public_sizes(
    stream: RandomStream,
    design: Sequence[StratumDesign],
    counts: StratumCounts,
    budget: PrivacyBudget,
    alpha: float,
    clip_proportions: bool = False,
    clip_interval: bool = False,
) -> tuple[CiResult, tuple[PrivateStratumRelease, ...]]:
    """Stratum-level noise with public sample sizes.

    Per stratum: p_tilde_h = p_hat_h + N(0, 1/(2 rho n_h^2)), then the
    bias-corrected variance estimate

        V_tilde_h = ((N_h - n_h)/N_h) (p_tilde_h (1 - p_tilde_h) + s2) / (n_h - 1) + s2

    with s2 the injected noise variance; adding s2 back inside undoes the
    downward bias E[p_tilde(1-p_tilde)] = p_hat(1-p_hat) - s2.  Proportions
    are clipped onto [0, 1] before the variance computation when requested.
    Spends the full (unsplit) budget.
    """
    check_paired(design, counts)
    rho = budget.rho
    releases = []
    noise_variances = []
    for h, (stratum, c) in enumerate(zip(design, counts.counts)):
        n = stratum.sample_size
        p_hat_h = c / n
        out = gaussian_mechanism(stream.child(h), p_hat_h, 1.0 / n, rho)
        p_tilde, was_clipped = (
            _clip_unit(out.value) if clip_proportions else (out.value, False)
        )
        s2 = out.noise_variance
        fpc = (stratum.population_size - n) / stratum.population_size
        v_raw = fpc * (p_tilde * (1.0 - p_tilde) + s2) / (n - 1) + s2
        v_tilde, floored = _floor_zero(v_raw)
        releases.append(
            PrivateStratumRelease(
                proportion=p_tilde,
                variance=v_tilde,
                proportion_noise_variance=s2,
                proportion_clipped=was_clipped,
                variance_floored=floored,
            )
        )
        noise_variances.append((f"stratum_proportion[{h}]", s2))
    point, variance = _aggregate(design, releases)
    flags = ClipFlags(
        proportion_clipped=any(r.proportion_clipped for r in releases),
        variance_floored=any(r.variance_floored for r in releases),
    )
    ci = wald_interval(
        point,
        variance,
        alpha,
        algorithm=AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES,
        budget=budget,
        clipped=flags,
        noise_variances=tuple(noise_variances),
    )
    if clip_interval:
        ci = ci.clip_to_unit_interval()
    return ci, tuple(releases)


def population_noise_public_sizes(
    stream: RandomStream,
    design: Sequence[StratumDesign],
    counts: StratumCounts,
    budget: PrivacyBudget,
    alpha: float,
    clip_estimate: bool = False,
    clip_interval: bool = False,
) -> CiResult:
    """Population-level noise with public sample sizes.

    p_tilde = p_hat + N(0, Dp^2/(2 rho1)); the variance estimate adds the
    known extrinsic term Dp^2/(2 rho1) and is itself released through a
    second Gaussian mechanism at sensitivity DV with budget rho2.  A noisy
    variance driven negative is floored at zero (flagged), yielding a
    degenerate zero-width interval rather than a failure.
    """
    check_paired(design, counts)
    if budget.rho1 <= 0.0 or budget.rho2 <= 0.0:
        raise ValidationError("population-level mechanism requires a strictly positive split")
    sens = sensitivities(design)
    est = non_private_estimate(design, counts)
    out_p = gaussian_mechanism(stream.child(0), est.proportion, sens.proportion, budget.rho1)
    p_tilde, was_clipped = (
        _clip_unit(out_p.value) if clip_estimate else (out_p.value, False)
    )
    out_v = gaussian_mechanism(
        stream.child(1), est.variance + out_p.noise_variance, sens.variance, budget.rho2
    )
    v_tilde, floored = _floor_zero(out_v.value)
    flags = ClipFlags(proportion_clipped=was_clipped, variance_floored=floored)
    ci = wald_interval(
        p_tilde,
        v_tilde,
        alpha,
        algorithm=AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES,
        budget=budget,
        clipped=flags,
        noise_variances=(
            ("population_proportion", out_p.noise_variance),
            ("variance_estimate", out_v.noise_variance),
        ),
    )
    if clip_interval:
        ci = ci.clip_to_unit_interval()
    return ci


def stratum_noise_private_sizes(
    stream: RandomStream,
    design: Sequence[StratumDesign],
    counts: StratumCounts,
    budget: PrivacyBudget,
    alpha: float,
    clip_proportions: bool = False,
    clip_interval: bool = False,
) -> tuple[CiResult, tuple[PrivateStratumRelease, ...]]:
    """Stratum-level noise protecting both counts and sample sizes.

    Per stratum: c_tilde = c + N(0, 1/(2 rho1)); n_tilde = max(n + N(0,
    1/(2 rho2)), 2); p_tilde = c_tilde / n_tilde, and

        V_tilde_h = ((N_h - n_tilde)/(N_h - 1)) p_tilde (1-p_tilde) / n_tilde
                    + 1/(2 rho1 n_tilde^2) + p_tilde^2 / (2 rho2 n_tilde^2),

    the second-order moment expansion of the ratio-of-normals variance.  The
    finite-population factor is floored at zero if the noisy size exceeds the
    stratum population; the two additive noise terms are kept.  Warns when the
    denominator's coefficient of variation strains the normal approximation.
    """
    check_paired(design, counts)
    if budget.rho1 <= 0.0 or budget.rho2 <= 0.0:
        raise ValidationError("private-sizes mechanism requires a strictly positive split")
    worst_cv = max(denominator_cv(s.sample_size, budget.rho2) for s in design)
    if worst_cv >= CV_NORMAL_APPROX_THRESHOLD:
        warnings.warn(
            f"noisy-size coefficient of variation {worst_cv:.3g} is at or above "
            f"{CV_NORMAL_APPROX_THRESHOLD}; the ratio's normal approximation may be poor",
            RatioApproximationWarning,
            stacklevel=2,
        )
    releases = []
    noise_variances = []
    for h, (stratum, c) in enumerate(zip(design, counts.counts)):
        sub = stream.child(h)
        out_c = gaussian_mechanism(sub.child(0), float(c), 1.0, budget.rho1)
        out_n = gaussian_mechanism(sub.child(1), float(stratum.sample_size), 1.0, budget.rho2)
        size_floored = out_n.value < NOISY_SIZE_FLOOR
        n_tilde = NOISY_SIZE_FLOOR if size_floored else out_n.value
        ratio = out_c.value / n_tilde
        p_tilde, was_clipped = _clip_unit(ratio) if clip_proportions else (ratio, False)
        fpc_raw = (stratum.population_size - n_tilde) / (stratum.population_size - 1)
        fpc, fpc_floored = _floor_zero(fpc_raw)
        nsq = n_tilde * n_tilde
        v_raw = (
            fpc * p_tilde * (1.0 - p_tilde) / n_tilde
            + out_c.noise_variance / nsq
            + p_tilde * p_tilde * out_n.noise_variance / nsq
        )
        v_tilde, floored = _floor_zero(v_raw)
        releases.append(
            PrivateStratumRelease(
                proportion=p_tilde,
                variance=v_tilde,
                noisy_count=out_c.value,
                noisy_size=n_tilde,
                count_noise_variance=out_c.noise_variance,
                size_noise_variance=out_n.noise_variance,
                proportion_clipped=was_clipped,
                variance_floored=floored,
                noisy_size_floored=size_floored,
                fpc_floored=fpc_floored,
            )
        )
        noise_variances.append((f"stratum_count[{h}]", out_c.noise_variance))
        noise_variances.append((f"stratum_size[{h}]", out_n.noise_variance))
    point, variance = _aggregate(design, releases)
    flags = ClipFlags(
        proportion_clipped=any(r.proportion_clipped for r in releases),
        variance_floored=any(r.variance_floored for r in releases),
        noisy_size_floored=any(r.noisy_size_floored for r in releases),
    )
    ci = wald_interval(
        point,
        variance,
        alpha,
        algorithm=AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES,
        budget=budget,
        clipped=flags,
        noise_variances=tuple(noise_variances),
    )
    if clip_interval:
        ci = ci.clip_to_unit_interval()
    return ci, tuple(releases)


def difference_ci(result_a: CiResult, result_b: CiResult, alpha: float) -> CiResult:
    """Wald interval for the difference of two independently released proportions.

    point = a - b, variance = Va + Vb.  The inputs must come from disjoint
    populations; their budgets apply per dataset (parallel composition), so
    the difference result carries no summed budget of its own.
    """
    for name, r in (("first", result_a), ("second", result_b)):
        if r.variance_estimate is None or not r.variance_estimate >= 0.0:
            raise ValidationError(f"{name} input lacks a usable variance estimate")
    return wald_interval(
        result_a.point_estimate - result_b.point_estimate,
        result_a.variance_estimate + result_b.variance_estimate,
        alpha,
        algorithm=AlgorithmTag.DIFFERENCE,
        budget=None,
    )
