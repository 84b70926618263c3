"""Synthetic long-tail data, imbalance metrics, and sweep harnesses.

The synthetic generator stands in for web-crawl imbalance at desk scale:
cluster sizes follow a truncated Zipf law over ranks, cluster centers are
rejection-sampled on the unit sphere with pairwise cosine below 0.5, and
points are noisy copies of their center, so ground truth is known exactly.

Coverage simulation runs the real sampler and reports how many distinct ids
each cluster has contributed after E epochs, next to the closed-form
expectation c * (1 - (1 - S/c)^E) for fresh without-replacement draws
(full coverage once S >= c).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterAssignment, assign, merge_centroids, recount_after_merge, train_kmeans
from .errors import ConfigError, GenerationError
from .sampler import SampleMode, SamplerConfig, sample_epoch
from .scaling import ScalingPlan, compute_targets, largest_remainder
from .store import EmbeddingStore
from .validation import as_counts, check_positive_int

REPORT_SCHEMA = "dynamics-report/1"
DEFAULT_ALPHA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0)


def gini(values) -> float:
    """Gini coefficient of a non-negative size vector (0 = uniform)."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ConfigError("gini of an empty vector is undefined")
    if bool((x < 0).any()):
        raise ConfigError("gini is only defined for non-negative values")
    total = x.sum()
    if total == 0.0:
        return 0.0
    i = np.arange(1, n + 1, dtype=np.float64)
    return float(((2.0 * i - n - 1.0) * x).sum() / (n * total))


@dataclass(frozen=True)
class DistributionReport:
    """Imbalance statistics for one per-cluster size vector."""

    n_clusters: int
    total: int
    min: int
    max: int
    mean: float
    gini: float
    head_share_1pct: float
    tail_share: float
    tail_threshold: int

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "distribution",
            "n_clusters": self.n_clusters,
            "total": self.total,
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "gini": self.gini,
            "head_share_1pct": self.head_share_1pct,
            "tail_share": self.tail_share,
            "tail_threshold": self.tail_threshold,
        }


def distribution_report(counts, tail_threshold: int = 1000) -> DistributionReport:
    """Summarize a size vector: extremes, Gini, head and tail shares."""
    counts = as_counts(counts)
    total = int(counts.sum())
    n = counts.shape[0]
    n_head = max(1, n // 100)
    head = int(np.sort(counts)[::-1][:n_head].sum())
    return DistributionReport(
        n_clusters=n,
        total=total,
        min=int(counts.min()),
        max=int(counts.max()),
        mean=total / n,
        gini=gini(counts),
        head_share_1pct=head / total if total else 0.0,
        tail_share=float((counts < int(tail_threshold)).mean()),
        tail_threshold=int(tail_threshold),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a ground-truth long-tail embedding collection."""

    n_clusters: int
    zipf_exponent: float
    total_samples: int
    dim: int
    intra_cluster_noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if int(self.n_clusters) < 2:
            raise ConfigError("synthetic data needs at least 2 clusters")
        if int(self.total_samples) < int(self.n_clusters):
            raise ConfigError("total_samples must be at least n_clusters")
        check_positive_int(self.dim, "dim")
        if float(self.zipf_exponent) < 0:
            raise ConfigError("zipf_exponent must be >= 0")
        if float(self.intra_cluster_noise) < 0:
            raise ConfigError("intra_cluster_noise must be >= 0")


def zipf_sizes(n_clusters: int, exponent: float, total: int) -> np.ndarray:
    """Cluster sizes proportional to rank^(-exponent), summing to ``total``."""
    ranks = np.arange(1, n_clusters + 1, dtype=np.float64)
    weights = ranks ** (-float(exponent))
    return largest_remainder(weights / weights.sum() * total, total)


MAX_CENTER_SIMILARITY = 0.5
_CENTER_ATTEMPTS_PER_CLUSTER = 200


def _sample_centers(rng: np.random.Generator, n_clusters: int, dim: int) -> np.ndarray:
    centers = np.empty((n_clusters, dim), dtype=np.float64)
    placed = 0
    budget = n_clusters * _CENTER_ATTEMPTS_PER_CLUSTER
    while placed < n_clusters:
        if budget <= 0:
            raise GenerationError(
                f"could not place {n_clusters} centers with pairwise similarity "
                f"< {MAX_CENTER_SIMILARITY} in dim {dim}; increase dim"
            )
        budget -= 1
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        v /= norm
        if placed and float((centers[:placed] @ v).max()) >= MAX_CENTER_SIMILARITY:
            continue
        centers[placed] = v
        placed += 1
    return centers


def gen_synthetic(spec: SyntheticSpec) -> tuple[EmbeddingStore, ClusterAssignment]:
    """Generate embeddings plus their ground-truth cluster assignment."""
    rng = np.random.default_rng(spec.seed)
    sizes = zipf_sizes(int(spec.n_clusters), float(spec.zipf_exponent), int(spec.total_samples))
    centers = _sample_centers(rng, int(spec.n_clusters), int(spec.dim))

    labels = np.repeat(np.arange(spec.n_clusters, dtype=np.uint32), sizes)
    points = centers[labels]
    sigma = float(spec.intra_cluster_noise)
    if sigma > 0.0:
        points = points + sigma * rng.standard_normal(points.shape)
    norms = np.linalg.norm(points, axis=1)
    if bool((norms < 1e-12).any()):
        raise GenerationError("noise produced a zero-norm point; lower intra_cluster_noise")
    rows = (points / norms[:, None]).astype(np.float32)

    ids = np.arange(spec.total_samples, dtype=np.uint64)
    store = EmbeddingStore(ids=ids, rows=rows)
    truth = ClusterAssignment(ids=ids, labels=labels, counts=sizes.astype(np.int64))
    return store, truth


def expected_unique(count: int, target: int, epochs: int) -> float:
    """Closed-form expected distinct ids after ``epochs`` independent draws."""
    if count == 0:
        return 0.0
    if target >= count:
        return float(count)
    return count * (1.0 - (1.0 - target / count) ** epochs)


@dataclass(frozen=True)
class CoverageReport:
    """Unique-id coverage per cluster across epochs, empirical vs closed form."""

    mode: SampleMode
    epochs: int
    trials: int
    counts: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    unique_mean: np.ndarray = field(repr=False)  # (epochs, k) mean over trials
    expected: np.ndarray = field(repr=False)  # (epochs, k) closed form
    unique_fraction: np.ndarray = field(repr=False)  # (epochs,) aggregate

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "coverage",
            "mode": self.mode.value,
            "epochs": self.epochs,
            "trials": self.trials,
            "counts": self.counts.tolist(),
            "targets": self.targets.tolist(),
            "unique_mean": self.unique_mean.tolist(),
            "expected": self.expected.tolist(),
            "unique_fraction": self.unique_fraction.tolist(),
        }


def coverage_sim(
    plan: ScalingPlan, config: SamplerConfig, epochs: int, trials: int
) -> CoverageReport:
    """Run the real sampler ``trials`` times and measure cumulative coverage.

    Trial t reuses ``config`` with seed ``config.seed + t``, so trials are
    independent but the whole simulation is reproducible.
    """
    epochs = check_positive_int(epochs, "epochs")
    trials = check_positive_int(trials, "trials")
    counts = plan.counts
    k = counts.shape[0]
    n = int(counts.sum())

    # Synthetic contiguous ids grouped by cluster stand in for real samples.
    ids = np.arange(n, dtype=np.uint64)
    labels = np.repeat(np.arange(k, dtype=np.uint32), counts)
    assignment = ClusterAssignment(ids=ids, labels=labels, counts=counts)

    acc = np.zeros((epochs, k), dtype=np.float64)
    for trial in range(trials):
        trial_config = SamplerConfig(
            mode=config.mode,
            seed=int(config.seed) + trial,
            epochs=epochs,
            keep_fraction=config.keep_fraction,
        )
        seen = np.zeros(n, dtype=bool)
        for epoch in range(epochs):
            manifest = sample_epoch(assignment, plan, trial_config, epoch)
            seen[manifest.ids.astype(np.int64)] = True
            acc[epoch] += np.bincount(labels[seen], minlength=k)
    unique_mean = acc / trials

    expected = np.empty((epochs, k), dtype=np.float64)
    for epoch in range(epochs):
        for i in range(k):
            expected[epoch, i] = expected_unique(int(counts[i]), int(plan.targets_int[i]), epoch + 1)

    fraction = unique_mean.sum(axis=1) / n if n else np.zeros(epochs)
    return CoverageReport(
        mode=config.mode,
        epochs=epochs,
        trials=trials,
        counts=counts,
        targets=plan.targets_int,
        unique_mean=unique_mean,
        expected=expected,
        unique_fraction=fraction,
    )


@dataclass(frozen=True)
class AlphaSweepEntry:
    alpha: float
    plan: ScalingPlan
    report: DistributionReport

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "report": self.report.to_dict()}


def alpha_sweep(
    counts, alphas=DEFAULT_ALPHA_GRID, target_total: float | None = None,
    tail_threshold: int = 1000,
) -> list[AlphaSweepEntry]:
    """Distribution reports of integer targets across an exponent grid.

    ``target_total`` defaults to half the total count, the same budget the
    full pipeline uses by default.
    """
    counts = as_counts(counts)
    if target_total is None:
        target_total = 0.5 * float(counts.sum())
    entries = []
    for alpha in alphas:
        plan = compute_targets(counts, float(alpha), target_total)
        entries.append(
            AlphaSweepEntry(
                alpha=float(alpha),
                plan=plan,
                report=distribution_report(plan.targets_int, tail_threshold=tail_threshold),
            )
        )
    return entries


@dataclass(frozen=True)
class KSweepEntry:
    k_requested: int
    k_live: int
    counts_report: DistributionReport
    targets_report: DistributionReport

    def to_dict(self) -> dict:
        return {
            "k_requested": self.k_requested,
            "k_live": self.k_live,
            "counts_report": self.counts_report.to_dict(),
            "targets_report": self.targets_report.to_dict(),
        }


def cluster_count_sweep(
    store: EmbeddingStore,
    ks,
    iters: int = 10,
    max_points_per_centroid: int = 1000,
    merge_threshold: float = 0.7,
    alpha: float = 0.2,
    target_fraction: float = 0.5,
    seed: int = 0,
    tail_threshold: int = 1000,
) -> list[KSweepEntry]:
    """Run train -> assign -> merge -> recount -> scale for each cluster count."""
    entries = []
    for k in ks:
        model = train_kmeans(
            store, int(k), iters=iters,
            max_points_per_centroid=max_points_per_centroid, seed=seed,
        )
        assignment = assign(store, model)
        merged = merge_centroids(model, merge_threshold)
        recounted = recount_after_merge(assignment, merged)
        plan = compute_targets(
            recounted.counts, alpha, target_fraction * store.count
        )
        entries.append(
            KSweepEntry(
                k_requested=int(k),
                k_live=merged.k,
                counts_report=distribution_report(recounted.counts, tail_threshold=tail_threshold),
                targets_report=distribution_report(plan.targets_int, tail_threshold=tail_threshold),
            )
        )
    return entries
