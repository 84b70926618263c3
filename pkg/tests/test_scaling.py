"""Power-law targets, apportionment, and sampling rates."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynamics import (
    ConfigError,
    IntegrityError,
    ScalingPlan,
    compute_targets,
    describe_plan,
    largest_remainder,
    load_plan,
    sampling_rate,
    save_plan,
)

# Frozen from a 50-digit decimal evaluation of the target formula.
TARGETS_100_10_1_A02_T55 = (
    27.106087358236011,
    17.102784898800730,
    10.791127742963259,
)


def oracle_targets(counts, alpha, target_total):
    """Extended-precision (80-bit) independent evaluation of the target formula."""
    counts = np.asarray(counts, dtype=np.longdouble)
    powered = np.where(counts > 0, np.power(counts, np.longdouble(alpha)), 0.0)
    return np.asarray(powered / powered.sum() * np.longdouble(target_total), dtype=np.longdouble)


def oracle_apportion(values, total):
    """Pure-python largest remainder: floors, then +1 by descending fraction."""
    floors = [int(np.floor(v)) for v in values]
    fracs = sorted(
        range(len(values)), key=lambda i: (-(float(values[i]) - floors[i]), i)
    )
    leftover = int(total) - sum(floors)
    for i in fracs[:leftover]:
        floors[i] += 1
    return floors


class TestComputeTargets:
    def test_alpha_zero_is_uniform(self):
        plan = compute_targets([100, 10, 1], 0.0, 55.5)
        np.testing.assert_array_equal(plan.targets_real, [18.5, 18.5, 18.5])

    def test_alpha_one_is_proportional(self):
        plan = compute_targets([100, 10, 1], 1.0, 55.5)
        np.testing.assert_allclose(plan.targets_real, [50.0, 5.0, 0.5], rtol=1e-12)

    def test_reference_plan(self):
        plan = compute_targets([100, 10, 1], 0.2, 55)
        np.testing.assert_allclose(plan.targets_real, TARGETS_100_10_1_A02_T55, rtol=1e-12)
        assert plan.targets_int.tolist() == [27, 17, 11]
        np.testing.assert_allclose(plan.rates, [0.27, 1.7, 11.0], rtol=1e-12)

    def test_matches_extended_precision_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(1, 40))
            counts = rng.integers(0, 10**6, size=n)
            if not counts.any():
                counts[0] = 1
            alpha = float(rng.uniform(0, 3))
            target = float(rng.uniform(0.5, 2e6))
            plan = compute_targets(counts, alpha, target)
            expected = oracle_targets(counts, alpha, target)
            np.testing.assert_allclose(plan.targets_real, expected.astype(np.float64), rtol=1e-9)

    def test_empty_clusters_get_zero_for_every_alpha(self):
        for alpha in (0.0, 0.2, 1.0, 2.0):
            plan = compute_targets([5, 0, 3], alpha, 6)
            assert plan.targets_real[1] == 0.0
            assert plan.targets_int[1] == 0
            assert plan.rates[1] == 0.0

    def test_all_zero_counts_rejected(self):
        with pytest.raises(ConfigError):
            compute_targets([0, 0], 0.2, 10)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ConfigError):
            compute_targets([1, 2], -0.1, 10)

    def test_nonpositive_target_rejected(self):
        with pytest.raises(ConfigError):
            compute_targets([1, 2], 0.2, 0.0)


class TestApportionment:
    def test_reference_example(self):
        values = np.asarray(TARGETS_100_10_1_A02_T55)
        assert largest_remainder(values, 55).tolist() == [27, 17, 11]
        assert oracle_apportion(values, 55) == [27, 17, 11]

    def test_tie_breaks_to_lower_index(self):
        assert largest_remainder(np.array([1.5, 1.5, 1.5, 1.5]), 6).tolist() == [2, 2, 1, 1]

    @settings(max_examples=200, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**31),
        n=st.integers(min_value=1, max_value=50),
        alpha=st.floats(min_value=0.0, max_value=3.0, allow_nan=False),
        target=st.floats(min_value=0.5, max_value=1e6, allow_nan=False),
    )
    def test_exact_total_property(self, seed, n, alpha, target):
        rng = np.random.default_rng(seed)
        counts = rng.integers(0, 10**5, size=n)
        if not counts.any():
            counts[0] = 1
        plan = compute_targets(counts, alpha, target)
        assert int(plan.targets_int.sum()) == round(target)
        assert oracle_apportion(plan.targets_real, round(target)) == plan.targets_int.tolist()

    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**31),
        n=st.integers(min_value=2, max_value=30),
    )
    def test_within_one_of_real_targets(self, seed, n):
        rng = np.random.default_rng(seed)
        values = rng.uniform(0, 100, size=n)
        total = round(float(values.sum()))
        if total == 0:
            values[0] += 1.0
            total = round(float(values.sum()))
        out = largest_remainder(values, total)
        assert np.all(np.abs(out - values) < 1.0 + 1e-9)


class TestPlanInvariants:
    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**31),
        alpha=st.floats(min_value=0.0, max_value=3.0, allow_nan=False),
        lam=st.sampled_from([2, 10]),
    )
    def test_scale_invariance(self, seed, alpha, lam):
        rng = np.random.default_rng(seed)
        counts = rng.integers(1, 10**4, size=int(rng.integers(1, 30)))
        base = compute_targets(counts, alpha, 500.0)
        scaled = compute_targets(counts * lam, alpha, 500.0)
        np.testing.assert_allclose(scaled.targets_real, base.targets_real, rtol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**31),
        alpha=st.floats(min_value=0.0, max_value=3.0, allow_nan=False),
    )
    def test_order_preservation(self, seed, alpha):
        rng = np.random.default_rng(seed)
        counts = rng.integers(0, 10**5, size=int(rng.integers(2, 40)))
        if not counts.any():
            counts[0] = 1
        plan = compute_targets(counts, alpha, 1000.0)
        order = np.argsort(-counts, kind="stable")
        sorted_targets = plan.targets_real[order]
        assert np.all(np.diff(sorted_targets) <= 1e-12)

    def test_alpha_monotone_concentration(self):
        counts = np.array([5000, 800, 90, 7])
        ratios = []
        for alpha in np.linspace(0.0, 3.0, 31):
            plan = compute_targets(counts, float(alpha), 1000.0)
            positive = plan.targets_real[plan.counts > 0]
            ratios.append(positive.max() / positive.min())
        assert np.all(np.diff(ratios) >= -1e-9)


class TestRates:
    def test_basic_rate(self):
        plan = compute_targets([100, 10, 1], 0.2, 55)
        assert sampling_rate(plan, 0) == pytest.approx(0.27)
        assert sampling_rate(plan, 2) == pytest.approx(11.0)

    def test_rate_one_passthrough(self):
        plan = compute_targets([10, 10], 0.0, 20)
        assert sampling_rate(plan, 0) == 1.0
        assert sampling_rate(plan, 1) == 1.0

    def test_empty_cluster_rate_zero(self):
        plan = compute_targets([10, 0], 1.0, 5)
        assert sampling_rate(plan, 1) == 0.0

    def test_empty_cluster_with_target_is_integrity_error(self):
        plan = compute_targets([10, 0], 1.0, 5)
        doctored = ScalingPlan(
            alpha=plan.alpha,
            target_total=plan.target_total,
            counts=plan.counts,
            targets_real=plan.targets_real,
            targets_int=np.array([4, 1]),
            rates=plan.rates,
        )
        with pytest.raises(IntegrityError):
            sampling_rate(doctored, 1)

    def test_index_out_of_range(self):
        plan = compute_targets([10], 1.0, 5)
        with pytest.raises(ConfigError):
            sampling_rate(plan, 1)


class TestDescribeAndIO:
    def test_describe_plan_gini(self):
        plan = compute_targets([100, 10, 1], 0.2, 55)
        report = describe_plan(plan)
        assert report.gini == pytest.approx(32 / 165, abs=1e-12)

    def test_alpha_zero_flattens_gini(self):
        plan = compute_targets([100, 10, 1], 0.0, 30)
        report = describe_plan(plan)
        assert report.gini <= 22 / 37  # the Gini of the raw counts

    def test_plan_json_round_trip(self, tmp_path):
        plan = compute_targets([100, 10, 1], 0.2, 55)
        path = tmp_path / "plan.json"
        save_plan(plan, path)
        again = load_plan(path)
        assert again.alpha == plan.alpha
        assert again.target_total == plan.target_total
        np.testing.assert_array_equal(again.counts, plan.counts)
        np.testing.assert_array_equal(again.targets_int, plan.targets_int)
        np.testing.assert_allclose(again.targets_real, plan.targets_real, rtol=0)
        np.testing.assert_allclose(again.rates, plan.rates, rtol=0)
