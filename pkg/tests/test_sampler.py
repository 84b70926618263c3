"""Keyed streams, epoch manifests, mode semantics."""
from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from dynamics import (
    ClusterAssignment,
    ConfigError,
    EpochManifest,
    FormatError,
    IntegrityError,
    SampleMode,
    SamplerConfig,
    compute_targets,
    derive_stream,
    manifest_stats,
    read_manifest,
    sample_epoch,
    write_manifest,
)


def contiguous_assignment(counts):
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    return ClusterAssignment(
        ids=np.arange(n, dtype=np.uint64),
        labels=np.repeat(np.arange(counts.size, dtype=np.uint32), counts),
        counts=counts,
    )


def plan_for(counts, targets_int):
    counts = np.asarray(counts, dtype=np.int64)
    targets = np.asarray(targets_int, dtype=np.int64)
    # direct plan construction so tests can pin exact integer targets
    from dynamics import ScalingPlan

    rates = np.zeros(counts.size)
    positive = counts > 0
    rates[positive] = targets[positive] / counts[positive]
    return ScalingPlan(
        alpha=0.0,
        target_total=float(targets.sum()),
        counts=counts,
        targets_real=targets.astype(np.float64),
        targets_int=targets,
        rates=rates,
    )


class TestDeriveStream:
    def test_same_key_same_sequence(self):
        a = derive_stream(123, 4, 5).random(1000)
        b = derive_stream(123, 4, 5).random(1000)
        np.testing.assert_array_equal(a, b)

    def test_neighbor_keys_decorrelate(self):
        a = derive_stream(123, 4, 5).random(1000)
        for other in [(124, 4, 5), (123, 5, 5), (123, 4, 6)]:
            b = derive_stream(*other).random(1000)
            assert (a != b).sum() >= 990

    def test_uniformity_chi_square(self):
        draws = derive_stream(7, 0, 0).random(100_000)
        buckets = np.bincount((draws * 16).astype(int), minlength=16)
        result = stats.chisquare(buckets)
        assert result.pvalue > 0.001

    def test_negative_seed_accepted(self):
        stream = derive_stream(-987654321, 0, 0)
        assert stream.random() >= 0.0


class TestClusterDynamic:
    def test_full_cluster_identity(self):
        assignment = contiguous_assignment([4])
        plan = plan_for([4], [4])
        config = SamplerConfig(mode="cluster_dynamic", seed=0, epochs=3)
        for epoch in range(3):
            manifest = sample_epoch(assignment, plan, config, epoch)
            assert manifest.ids.tolist() == [0, 1, 2, 3]

    def test_upsampled_cluster_decomposition(self):
        assignment = contiguous_assignment([10])
        plan = plan_for([10], [25])
        config = SamplerConfig(mode="cluster_dynamic", seed=1, epochs=1)
        manifest = sample_epoch(assignment, plan, config, 0)
        assert manifest.total == 25
        multiplicity = np.bincount(manifest.ids.astype(int), minlength=10)
        assert set(multiplicity.tolist()) == {2, 3}
        assert int((multiplicity == 3).sum()) == 5

    def test_epochs_differ_reruns_do_not(self):
        assignment = contiguous_assignment([100])
        plan = plan_for([100], [27])
        config = SamplerConfig(mode="cluster_dynamic", seed=9, epochs=2)
        m0a = sample_epoch(assignment, plan, config, 0)
        m0b = sample_epoch(assignment, plan, config, 0)
        m1 = sample_epoch(assignment, plan, config, 1)
        assert m0a.ids.tolist() == m0b.ids.tolist()
        assert m0a.ids.tolist() != m1.ids.tolist()

    def test_exact_multiplicities_every_epoch(self):
        counts = [100, 10, 1]
        plan = compute_targets(counts, 0.2, 55)
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="cluster_dynamic", seed=3, epochs=5)
        for epoch in range(5):
            manifest = sample_epoch(assignment, plan, config, epoch)
            stats_ = manifest_stats(manifest, 3)
            assert stats_.tolist() == plan.targets_int.tolist()

    def test_canonical_order(self):
        counts = [50, 30, 20]
        plan = compute_targets(counts, 0.5, 60)
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="cluster_dynamic", seed=5, epochs=1)
        manifest = sample_epoch(assignment, plan, config, 0)
        keys = list(zip(manifest.clusters.tolist(), manifest.ids.tolist()))
        assert keys == sorted(keys)

    def test_threads_do_not_change_bytes(self, tmp_path):
        counts = [40, 30, 20, 10]
        plan = compute_targets(counts, 0.3, 50)
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="cluster_dynamic", seed=8, epochs=1)
        single = sample_epoch(assignment, plan, config, 0, threads=1)
        multi = sample_epoch(assignment, plan, config, 0, threads=4)
        write_manifest(single, tmp_path / "a.txt")
        write_manifest(multi, tmp_path / "b.txt")
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    def test_empty_cluster_with_target_rejected(self):
        assignment = contiguous_assignment([5, 0])
        plan = plan_for([5, 0], [3, 2])
        config = SamplerConfig(mode="cluster_dynamic", seed=0, epochs=1)
        with pytest.raises(IntegrityError):
            sample_epoch(assignment, plan, config, 0)

    def test_count_mismatch_rejected(self):
        assignment = contiguous_assignment([5, 5])
        plan = plan_for([5, 4], [3, 2])
        config = SamplerConfig(mode="cluster_dynamic", seed=0, epochs=1)
        with pytest.raises(IntegrityError):
            sample_epoch(assignment, plan, config, 0)

    def test_epoch_out_of_range(self):
        assignment = contiguous_assignment([5])
        plan = plan_for([5], [2])
        config = SamplerConfig(mode="cluster_dynamic", seed=0, epochs=2)
        with pytest.raises(ConfigError):
            sample_epoch(assignment, plan, config, 2)


class TestStaticModes:
    def test_cluster_static_same_subset_every_epoch(self):
        assignment = contiguous_assignment([100])
        plan = plan_for([100], [27])
        config = SamplerConfig(mode="cluster_static", seed=4, epochs=4)
        subsets = [sample_epoch(assignment, plan, config, e).ids.tolist() for e in range(4)]
        assert subsets[0] == subsets[1] == subsets[2] == subsets[3]

    def test_random_static_fixed_floor_size(self):
        assignment = contiguous_assignment([60, 40])
        plan = plan_for([60, 40], [30, 20])
        config = SamplerConfig(mode="random_static", seed=2, epochs=3, keep_fraction=0.25)
        manifests = [sample_epoch(assignment, plan, config, e) for e in range(3)]
        assert all(m.total == 25 for m in manifests)
        assert manifests[0].ids.tolist() == manifests[1].ids.tolist() == manifests[2].ids.tolist()

    def test_random_modes_require_keep_fraction(self):
        with pytest.raises(ConfigError):
            SamplerConfig(mode="random_static", seed=0, epochs=1)
        with pytest.raises(ConfigError):
            SamplerConfig(mode="cluster_dynamic", seed=0, epochs=1, keep_fraction=0.5)
        with pytest.raises(ConfigError):
            SamplerConfig(mode="random_dynamic", seed=0, epochs=1, keep_fraction=1.5)


class TestRandomDynamic:
    def test_total_near_binomial_mean(self):
        n = 10_000
        assignment = contiguous_assignment([n])
        plan = plan_for([n], [n // 2])
        config = SamplerConfig(mode="random_dynamic", seed=6, epochs=1, keep_fraction=0.5)
        manifest = sample_epoch(assignment, plan, config, 0)
        sigma = np.sqrt(n * 0.25)
        assert abs(manifest.total - n / 2) <= 3 * sigma

    def test_epochs_draw_fresh_subsets(self):
        assignment = contiguous_assignment([1000])
        plan = plan_for([1000], [500])
        config = SamplerConfig(mode="random_dynamic", seed=7, epochs=2, keep_fraction=0.5)
        a = sample_epoch(assignment, plan, config, 0)
        b = sample_epoch(assignment, plan, config, 1)
        assert a.ids.tolist() != b.ids.tolist()


class TestBernoulliDynamic:
    def test_downsampled_expectation(self):
        counts = [10_000]
        plan = plan_for(counts, [2_700])
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="bernoulli_dynamic", seed=1, epochs=1)
        manifest = sample_epoch(assignment, plan, config, 0)
        sigma = np.sqrt(10_000 * 0.27 * 0.73)
        assert abs(manifest.total - 2700) <= 4 * sigma

    def test_upsampled_multiplicities(self):
        counts = [1000]
        plan = plan_for(counts, [1700])
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="bernoulli_dynamic", seed=2, epochs=1)
        manifest = sample_epoch(assignment, plan, config, 0)
        multiplicity = np.bincount(manifest.ids.astype(int), minlength=1000)
        assert set(multiplicity.tolist()) <= {1, 2}
        sigma = np.sqrt(1000 * 0.7 * 0.3)
        assert abs(manifest.total - 1700) <= 4 * sigma

    def test_integer_rate_is_deterministic(self):
        counts = [7]
        plan = plan_for(counts, [21])
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="bernoulli_dynamic", seed=3, epochs=1)
        manifest = sample_epoch(assignment, plan, config, 0)
        multiplicity = np.bincount(manifest.ids.astype(int), minlength=7)
        assert multiplicity.tolist() == [3] * 7


class TestManifestIO:
    def test_stats_of_empty_manifest(self):
        manifest = EpochManifest(
            mode=SampleMode.CLUSTER_DYNAMIC,
            epoch=0,
            seed=0,
            ids=np.empty(0, dtype=np.uint64),
            clusters=np.empty(0, dtype=np.uint32),
        )
        assert manifest_stats(manifest, 4).tolist() == [0, 0, 0, 0]

    def test_write_read_round_trip(self, tmp_path):
        counts = [20, 5]
        plan = compute_targets(counts, 0.2, 10)
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="cluster_dynamic", seed=5, epochs=1)
        manifest = sample_epoch(assignment, plan, config, 0)
        path = tmp_path / "manifest.txt"
        write_manifest(manifest, path)

        text = path.read_text(encoding="utf-8")
        first = text.splitlines()[0]
        assert first == f"#dynamics-manifest v1 mode=cluster_dynamic epoch=0 seed=5 total={manifest.total}"

        again = read_manifest(path)
        assert again.mode is SampleMode.CLUSTER_DYNAMIC
        assert again.epoch == 0 and again.seed == 5
        assert np.array_equal(again.ids, manifest.ids)
        assert np.array_equal(again.clusters, manifest.clusters)

    def test_read_rejects_wrong_entry_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("#dynamics-manifest v1 mode=cluster_dynamic epoch=0 seed=1 total=2\n7\t0\n")
        with pytest.raises(FormatError):
            read_manifest(path)

    def test_read_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a manifest\n")
        with pytest.raises(FormatError):
            read_manifest(path)

    def test_shuffle_permutes_but_preserves_multiset(self):
        counts = [50, 25]
        plan = compute_targets(counts, 0.2, 40)
        assignment = contiguous_assignment(counts)
        config = SamplerConfig(mode="cluster_dynamic", seed=6, epochs=1)
        plain = sample_epoch(assignment, plan, config, 0)
        shuffled = sample_epoch(assignment, plan, config, 0, shuffle=True)
        again = sample_epoch(assignment, plan, config, 0, shuffle=True)
        assert shuffled.ids.tolist() != plain.ids.tolist()
        assert sorted(shuffled.ids.tolist()) == sorted(plain.ids.tolist())
        assert shuffled.ids.tolist() == again.ids.tolist()
        assert manifest_stats(shuffled, 2).tolist() == manifest_stats(plain, 2).tolist()
