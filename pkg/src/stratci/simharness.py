"""Finite-population simulation harness.

A configuration fixes one population (the design-based ground truth); each
repetition redraws the stratified sample, runs the configured interval
mechanisms, and records coverage of the true proportion and interval width.
Everything is a pure function of (config, base_seed): repetitions own derived
streams keyed by index, and aggregation reduces records in index order, so
execution order never changes a summary bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    AlgorithmTag,
    CiResult,
    InfeasibleError,
    PrivacyBudget,
    StratumCounts,
    StratumDesign,
    ValidationError,
    build_design,
    normal_quantile,
)
from .dp_ci import (
    population_noise_public_sizes,
    stratum_noise_private_sizes,
    stratum_noise_public_sizes,
)
from .estimators import exact_stratum_variance, non_private_ci
from .mechanisms import sensitivities
from .randomness import RandomStream, derive_stream

RHO_ONE_OVER_MAX_N = "1/max_n"


@dataclass(frozen=True)
class Uniform:
    """A uniform range for a population parameter; discrete for sizes."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not self.low <= self.high:
            raise ValidationError(f"uniform range has low {self.low} > high {self.high}")


@dataclass(frozen=True)
class Population:
    """Fixed finite population: stratum sizes and attribute-positive counts."""

    stratum_sizes: tuple[int, ...]
    positive_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "stratum_sizes", tuple(self.stratum_sizes))
        object.__setattr__(self, "positive_counts", tuple(self.positive_counts))
        if len(self.stratum_sizes) != len(self.positive_counts):
            raise ValidationError("stratum sizes and positive counts must pair up")
        for N, K in zip(self.stratum_sizes, self.positive_counts):
            if not 0 <= K <= N:
                raise ValidationError(f"positive count {K} outside [0, {N}]")

    @property
    def stratum_proportions(self) -> tuple[float, ...]:
        return tuple(K / N for N, K in zip(self.stratum_sizes, self.positive_counts))

    @property
    def proportion(self) -> float:
        return sum(self.positive_counts) / sum(self.stratum_sizes)


@dataclass(frozen=True)
class ExperimentConfig:
    """Design of one repeated-sampling experiment.

    ``rho`` is either a number or the string "1/max_n", resolved against the
    realized sample sizes.  ``min_sample_size`` optionally floors every n_h
    (off by default).  Clipping flags mirror the mechanism arguments.
    """

    alpha: float = 0.1
    strata: int = 1
    stratum_size: int | Uniform = 2000
    rate: float | Uniform = 0.076
    proportion: float | Uniform = 0.5
    rho: float | str = 0.01
    split: float = 0.5
    algorithms: tuple[AlgorithmTag, ...] = (
        AlgorithmTag.NON_PRIVATE,
        AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES,
        AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES,
        AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES,
    )
    repetitions: int = 10000
    base_seed: int = 0
    clip_proportions: bool = False
    clip_interval: bool = False
    min_sample_size: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.strata < 1:
            raise ValidationError(f"strata must be at least 1, got {self.strata}")
        if self.repetitions < 1:
            raise ValidationError(f"repetitions must be at least 1, got {self.repetitions}")
        if isinstance(self.rho, str):
            if self.rho != RHO_ONE_OVER_MAX_N:
                raise ValidationError(f"rho must be a number or {RHO_ONE_OVER_MAX_N!r}, got {self.rho!r}")
        elif not isinstance(self.rho, (int, float)) or not self.rho > 0.0:
            raise ValidationError(f"rho must be a positive number, got {self.rho!r}")
        if not (0.0 < self.split < 1.0):
            raise ValidationError(f"split must lie in (0, 1), got {self.split}")
        for name, spec, lo, hi in (
            ("rate", self.rate, 0.0, 1.0),
            ("proportion", self.proportion, 0.0, 1.0),
        ):
            low = spec.low if isinstance(spec, Uniform) else spec
            high = spec.high if isinstance(spec, Uniform) else spec
            if not (lo < low if name == "rate" else lo <= low) or high > hi:
                raise ValidationError(f"{name} values must lie in ({lo}, {hi}], got {spec}")
        if not self.algorithms:
            raise ValidationError("at least one algorithm is required")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_population(stream: RandomStream, config: ExperimentConfig) -> Population:
    """Realize stratum sizes and positive counts from the configured rules.

    K_h = round(p_h N_h); the realized overall proportion is recomputed from
    the K_h, so it is reported exactly as the coverage target.
    """
    gen = stream.generator()
    H = config.strata
    if isinstance(config.stratum_size, Uniform):
        lo, hi = int(config.stratum_size.low), int(config.stratum_size.high)
        sizes = tuple(int(v) for v in gen.integers(lo, hi + 1, size=H))
    else:
        sizes = (int(config.stratum_size),) * H
    if isinstance(config.proportion, Uniform):
        props = gen.uniform(config.proportion.low, config.proportion.high, size=H)
    else:
        props = np.full(H, float(config.proportion))
    counts = tuple(_round_half_up(p * N) for p, N in zip(props, sizes))
    return Population(sizes, counts)


def _realize_rates(stream: RandomStream, config: ExperimentConfig) -> tuple[float, ...]:
    if isinstance(config.rate, Uniform):
        gen = stream.generator()
        return tuple(float(r) for r in gen.uniform(config.rate.low, config.rate.high, size=config.strata))
    return (float(config.rate),) * config.strata


def _sample_sizes(
    population: Population, rates: Sequence[float], min_sample_size: int | None
) -> tuple[int, ...]:
    sizes = []
    for h, (N, r) in enumerate(zip(population.stratum_sizes, rates)):
        n = _round_half_up(r * N)
        if min_sample_size is not None:
            n = max(n, min_sample_size)
        if n < 2:
            raise InfeasibleError(
                f"stratum {h}: rate {r} of size {N} yields sample size {n} < 2"
            )
        if n > N:
            raise InfeasibleError(
                f"stratum {h}: sample size {n} exceeds population size {N}"
            )
        sizes.append(n)
    return tuple(sizes)


def draw_sample(
    stream: RandomStream,
    population: Population,
    rates: Sequence[float],
    min_sample_size: int | None = None,
) -> tuple[tuple[StratumDesign, ...], StratumCounts]:
    """Stratified sample: independent without-replacement counts per stratum."""
    if len(rates) != len(population.stratum_sizes):
        raise ValidationError("rates must pair with the population's strata")
    sizes = _sample_sizes(population, rates, min_sample_size)
    design = build_design(list(zip(population.stratum_sizes, sizes)))
    gen = stream.generator()
    ngood = np.asarray(population.positive_counts, dtype=np.int64)
    nbad = np.asarray(population.stratum_sizes, dtype=np.int64) - ngood
    counts = gen.hypergeometric(ngood, nbad, np.asarray(sizes, dtype=np.int64))
    return design, StratumCounts(tuple(int(c) for c in np.atleast_1d(counts)))


@dataclass(frozen=True)
class RepetitionRecord:
    """One interval from one repetition."""

    repetition: int
    algorithm: AlgorithmTag
    covered: bool
    width: float
    lower: float
    upper: float
    point_estimate: float


@dataclass(frozen=True)
class AlgorithmSummary:
    coverage: float
    mean_width: float
    width_sd: float
    mean_width_ratio: float
    mean_lower: float
    mean_upper: float


@dataclass(frozen=True)
class ExperimentSummary:
    """Aggregated results of one experiment, per algorithm."""

    true_proportion: float
    stratum_sizes: tuple[int, ...]
    sample_sizes: tuple[int, ...]
    rho: float
    alpha: float
    repetitions: int
    by_algorithm: tuple[tuple[AlgorithmTag, AlgorithmSummary], ...]
    records: tuple[RepetitionRecord, ...] | None = None


def _resolve_rho(config: ExperimentConfig, sample_sizes: Sequence[int]) -> float:
    if config.rho == RHO_ONE_OVER_MAX_N:
        return 1.0 / max(sample_sizes)
    return float(config.rho)


def _run_algorithm(
    tag: AlgorithmTag,
    stream: RandomStream,
    design: tuple[StratumDesign, ...],
    counts: StratumCounts,
    rho: float,
    config: ExperimentConfig,
) -> CiResult:
    if tag is AlgorithmTag.NON_PRIVATE:
        ci = non_private_ci(design, counts, config.alpha)
        return ci.clip_to_unit_interval() if config.clip_interval else ci
    budget = PrivacyBudget.total(rho, config.split)
    if tag is AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES:
        ci, _ = stratum_noise_public_sizes(
            stream, design, counts, budget, config.alpha,
            clip_proportions=config.clip_proportions, clip_interval=config.clip_interval,
        )
        return ci
    if tag is AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES:
        return population_noise_public_sizes(
            stream, design, counts, budget, config.alpha,
            clip_estimate=config.clip_proportions, clip_interval=config.clip_interval,
        )
    if tag is AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES:
        ci, _ = stratum_noise_private_sizes(
            stream, design, counts, budget, config.alpha,
            clip_proportions=config.clip_proportions, clip_interval=config.clip_interval,
        )
        return ci
    raise ValidationError(f"cannot simulate algorithm {tag}")


# Stream index layout within one repetition: 0 draws the sample, 1 + slot
# feeds each mechanism.  Slots are fixed per tag so adding or reordering
# algorithms in a config never shifts another algorithm's noise.
_ALGORITHM_SLOT = {
    AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES: 0,
    AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES: 1,
    AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES: 2,
}


def run_experiment(
    config: ExperimentConfig,
    *,
    rep_order: Sequence[int] | None = None,
    keep_records: bool = False,
    grid_index: int | None = None,
) -> ExperimentSummary:
    """Run the configured repetitions against one fixed population.

    The population (and the realized sampling rates) come from stream
    (base_seed, -1); repetition r uses stream (base_seed, r), or
    (base_seed, grid_index, r) inside a sweep.  ``rep_order`` only permutes
    execution; records are keyed by repetition index and reduced in index
    order, so the summary is order-invariant.
    """
    setup = derive_stream(config.base_seed, [-1])
    population = generate_population(setup.child(0), config)
    rates = _realize_rates(setup.child(1), config)
    sample_sizes = _sample_sizes(population, rates, config.min_sample_size)
    rho = _resolve_rho(config, sample_sizes)
    true_p = population.proportion

    R = config.repetitions
    tags = config.algorithms
    width = {tag: np.empty(R) for tag in tags}
    lower = {tag: np.empty(R) for tag in tags}
    upper = {tag: np.empty(R) for tag in tags}
    point = {tag: np.empty(R) for tag in tags}
    covered = {tag: np.empty(R, dtype=bool) for tag in tags}
    baseline_width = np.empty(R)

    order = range(R) if rep_order is None else rep_order
    if rep_order is not None and sorted(rep_order) != list(range(R)):
        raise ValidationError("rep_order must be a permutation of range(repetitions)")
    for r in order:
        indices = [r] if grid_index is None else [grid_index, r]
        rep_stream = derive_stream(config.base_seed, indices)
        design, counts = draw_sample(
            rep_stream.child(0), population, rates, config.min_sample_size
        )
        baseline = non_private_ci(design, counts, config.alpha)
        if config.clip_interval:
            baseline = baseline.clip_to_unit_interval()
        baseline_width[r] = baseline.width
        for tag in tags:
            if tag is AlgorithmTag.NON_PRIVATE:
                ci = baseline
            else:
                ci = _run_algorithm(
                    tag, rep_stream.child(1 + _ALGORITHM_SLOT[tag]),
                    design, counts, rho, config,
                )
            width[tag][r] = ci.width
            lower[tag][r] = ci.lower
            upper[tag][r] = ci.upper
            point[tag][r] = ci.point_estimate
            covered[tag][r] = ci.lower <= true_p <= ci.upper

    rows = []
    for tag in tags:
        ratios = width[tag] / baseline_width
        rows.append(
            (
                tag,
                AlgorithmSummary(
                    coverage=float(np.mean(covered[tag])),
                    mean_width=float(np.mean(width[tag])),
                    width_sd=float(np.std(width[tag], ddof=1)) if R > 1 else 0.0,
                    mean_width_ratio=float(np.mean(ratios)),
                    mean_lower=float(np.mean(lower[tag])),
                    mean_upper=float(np.mean(upper[tag])),
                ),
            )
        )
    records = None
    if keep_records:
        records = tuple(
            RepetitionRecord(
                r, tag,
                bool(covered[tag][r]),
                float(width[tag][r]),
                float(lower[tag][r]),
                float(upper[tag][r]),
                float(point[tag][r]),
            )
            for r in range(R)
            for tag in tags
        )
    return ExperimentSummary(
        true_proportion=true_p,
        stratum_sizes=population.stratum_sizes,
        sample_sizes=sample_sizes,
        rho=rho,
        alpha=config.alpha,
        repetitions=R,
        by_algorithm=tuple(rows),
        records=records,
    )


def _theoretical_law(
    tag: AlgorithmTag,
    population: Population,
    design: Sequence[StratumDesign],
    rho: float,
    split: float,
) -> tuple[float, float]:
    """Mean and variance of the limiting normal law for each released estimator."""
    p = population.proportion
    p_h = population.stratum_proportions
    var_phat = sum(
        s.weight**2 * exact_stratum_variance(s, ph) for s, ph in zip(design, p_h)
    )
    if tag is AlgorithmTag.NON_PRIVATE:
        return p, var_phat
    budget = PrivacyBudget.total(rho, split)
    if tag is AlgorithmTag.STRATUM_NOISE_PUBLIC_SIZES:
        extra = sum((s.weight / s.sample_size) ** 2 for s in design) / (2.0 * rho)
        return p, var_phat + extra
    if tag is AlgorithmTag.POPULATION_NOISE_PUBLIC_SIZES:
        delta_p = sensitivities(design).proportion
        return p, var_phat + delta_p**2 / (2.0 * budget.rho1)
    if tag is AlgorithmTag.STRATUM_NOISE_PRIVATE_SIZES:
        bias = sum(
            s.weight * ph / (2.0 * budget.rho2 * s.sample_size**2)
            for s, ph in zip(design, p_h)
        )
        var = sum(
            s.weight**2
            * (
                exact_stratum_variance(s, ph)
                + 1.0 / (2.0 * budget.rho1 * s.sample_size**2)
                + ph**2 / (2.0 * budget.rho2 * s.sample_size**2)
            )
            for s, ph in zip(design, p_h)
        )
        return p + bias, var
    raise ValidationError(f"no theoretical law for {tag}")


def qq_data(
    config: ExperimentConfig, grid_size: int = 99
) -> tuple[tuple[AlgorithmTag, tuple[tuple[float, float, float], ...]], ...]:
    """Paired quantiles of each released estimator against its limiting law.

    Rows are (q, theoretical, empirical) on the grid q = i/(grid_size+1);
    the private-sizes law includes its second-order bias term.
    """
    if grid_size < 1:
        raise ValidationError(f"grid_size must be at least 1, got {grid_size}")
    setup = derive_stream(config.base_seed, [-1])
    population = generate_population(setup.child(0), config)
    rates = _realize_rates(setup.child(1), config)
    sizes = _sample_sizes(population, rates, config.min_sample_size)
    design = build_design(list(zip(population.stratum_sizes, sizes)))
    rho = _resolve_rho(config, sizes)

    summary = run_experiment(config, keep_records=True)
    assert summary.records is not None
    qs = np.arange(1, grid_size + 1) / (grid_size + 1)
    out = []
    for tag in config.algorithms:
        mean, var = _theoretical_law(tag, population, design, rho, config.split)
        sd = math.sqrt(var)
        points = np.array(
            [rec.point_estimate for rec in summary.records if rec.algorithm is tag]
        )
        empirical = np.quantile(points, qs)
        theoretical = [mean + normal_quantile(float(q)) * sd for q in qs]
        out.append(
            (tag, tuple((float(q), float(t), float(e)) for q, t, e in zip(qs, theoretical, empirical)))
        )
    return tuple(out)


def rho_sweep(
    config: ExperimentConfig, rho_grid: Sequence[float], *, keep_records: bool = False
) -> tuple[tuple[float, ExperimentSummary], ...]:
    """Re-run the experiment across a budget grid against the shared population.

    Grid point g uses repetition streams (base_seed, g, r), independent of
    every other grid point.
    """
    if not rho_grid:
        raise ValidationError("rho grid must be nonempty")
    out = []
    for g, rho in enumerate(rho_grid):
        cfg = replace(config, rho=float(rho))
        out.append(
            (float(rho), run_experiment(cfg, keep_records=keep_records, grid_index=g))
        )
    return tuple(out)
