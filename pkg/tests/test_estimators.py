import math

import numpy as np
import pytest

from stratci import (
    StratumCounts,
    ValidationError,
    build_design,
    build_design_with_weights,
    derive_stream,
    exact_stratum_variance,
    non_private_ci,
    non_private_estimate,
    sample_proportions,
    stratum_variance_estimate,
    wald_interval,
)


class TestProportions:
    def test_single_stratum_ratio(self):
        design = build_design([(2000, 100)])
        p, per = sample_proportions(design, StratumCounts((50,)))
        assert p == 0.5
        assert per == (0.5,)

    def test_symmetric_two_strata(self):
        design = build_design_with_weights([(1000, 100), (1000, 100)], [0.5, 0.5])
        p, _ = sample_proportions(design, StratumCounts((40, 60)))
        assert p == 0.5

    def test_weighted_two_strata(self):
        # w=(0.75,0.25), p_h=(0.3,0.2) -> 0.275
        design = build_design([(3000, 100), (1000, 50)])
        assert [s.weight for s in design] == [0.75, 0.25]
        p, per = sample_proportions(design, StratumCounts((30, 10)))
        assert per == (0.3, 0.2)
        assert math.isclose(p, 0.275, rel_tol=1e-15)

    def test_mismatched_lengths(self):
        design = build_design([(2000, 100)])
        with pytest.raises(ValidationError):
            sample_proportions(design, StratumCounts((10, 20)))

    def test_aggregation_identities(self):
        design = build_design([(1500, 60), (1800, 90), (2000, 150)])
        est = non_private_estimate(design, StratumCounts((10, 45, 75)))
        assert est.proportion == sum(
            s.weight * p for s, p in zip(design, est.stratum_proportions)
        )
        assert est.variance == sum(
            s.weight**2 * v for s, v in zip(design, est.stratum_variances)
        )


class TestStratumVariance:
    def test_zero_at_boundaries(self):
        (stratum,) = build_design([(2000, 100)])
        assert stratum_variance_estimate(stratum, 0.0) == 0.0
        assert stratum_variance_estimate(stratum, 1.0) == 0.0

    def test_census_kills_variance(self):
        (stratum,) = build_design([(100, 100)])
        assert stratum_variance_estimate(stratum, 0.5) == 0.0

    def test_frozen_value(self):
        (stratum,) = build_design([(2000, 100)])
        v = stratum_variance_estimate(stratum, 0.5)
        assert math.isclose(v, 0.95 * 0.25 / 99, rel_tol=1e-15)
        assert math.isclose(v, 2.398989898989899e-3, rel_tol=1e-12)

    def test_zero_iff_degenerate(self):
        (stratum,) = build_design([(2000, 100)])
        for p in (0.1, 0.5, 0.9):
            assert stratum_variance_estimate(stratum, p) > 0.0

    def test_estimator_vs_exact_form_differ(self):
        # the estimator divides by N and n-1; the exact design variance by
        # N-1 and n -- keeping them separate avoids the classic FPC mix-up
        (stratum,) = build_design([(2000, 100)])
        est = stratum_variance_estimate(stratum, 0.5)
        exact = exact_stratum_variance(stratum, 0.5)
        assert est != exact
        assert math.isclose(exact, (1900 / 1999) * 0.25 / 100, rel_tol=1e-15)


class TestWaldInterval:
    def test_zero_variance_degenerate(self):
        ci = wald_interval(0.5, 0.0, 0.1)
        assert (ci.lower, ci.upper) == (0.5, 0.5)

    def test_frozen_interval(self):
        # endpoints computed with a 40-digit quantile oracle
        ci = wald_interval(0.5, 0.95 * 0.25 / 99, 0.1)
        assert math.isclose(ci.lower, 0.41943591732258635, abs_tol=1e-12)
        assert math.isclose(ci.upper, 0.58056408267741364, abs_tol=1e-12)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValidationError):
            wald_interval(0.5, -1e-12, 0.1)


class TestUnbiasedness:
    def test_mc_unbiased_point_and_variance(self):
        # 1e5 simulated samples from a fixed two-stratum population
        reps = 10**5
        populations = [(1500, 600), (2500, 1500)]  # (N_h, K_h)
        sizes = [75, 125]
        design = build_design(list(zip((N for N, _ in populations), sizes)))
        true_p = sum(K for _, K in populations) / sum(N for N, _ in populations)

        gen = derive_stream(21, [0]).generator()
        ngood = np.array([K for _, K in populations])
        nbad = np.array([N - K for N, K in populations])
        counts = gen.hypergeometric(ngood, nbad, np.array(sizes), size=(reps, 2))

        p_hats = np.empty(reps)
        var_hats = np.empty(reps)
        for r in range(reps):
            est = non_private_estimate(design, StratumCounts((int(counts[r, 0]), int(counts[r, 1]))))
            p_hats[r] = est.proportion
            var_hats[r] = est.variance

        exact_var = sum(
            s.weight**2 * exact_stratum_variance(s, K / N)
            for s, (N, K) in zip(design, populations)
        )
        # mean of p_hat vs true p at 4 sigma
        se_p = math.sqrt(exact_var / reps)
        assert abs(float(np.mean(p_hats)) - true_p) <= 4 * se_p
        # mean of var_hat vs exact design variance at 4 sigma
        se_v = float(np.std(var_hats, ddof=1)) / math.sqrt(reps)
        assert abs(float(np.mean(var_hats)) - exact_var) <= 4 * se_v

    def test_non_private_ci_tag(self):
        design = build_design([(2000, 100)])
        ci = non_private_ci(design, StratumCounts((50,)), 0.1)
        assert ci.algorithm.value == "nonprivate"
        assert ci.budget_spent is None
        assert ci.noise_variances == ()
