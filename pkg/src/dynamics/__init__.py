"""Cluster-based dynamic sampling for long-tail embedding collections.

The pipeline: load embeddings, normalize them, cluster with spherical
k-means, merge near-duplicate centroids, rescale per-cluster budgets with a
power law, and emit a fresh deterministic sample manifest per training epoch.
"""
from .analysis import (
    AlphaSweepEntry,
    CoverageReport,
    DistributionReport,
    KSweepEntry,
    SyntheticSpec,
    alpha_sweep,
    cluster_count_sweep,
    coverage_sim,
    distribution_report,
    expected_unique,
    gen_synthetic,
    gini,
)
from .cluster import (
    ClusterAssignment,
    ClusterModel,
    SphericalKMeans,
    assign,
    load_assignment,
    load_model,
    merge_centroids,
    recount_after_merge,
    save_assignment,
    save_model,
    train_kmeans,
)
from .errors import (
    ConfigError,
    DegenerateVectorError,
    DynamicsError,
    FormatError,
    GenerationError,
    IntegrityError,
    IoError,
    TruncationError,
)
from .pipeline import PipelineConfig, run_pipeline, validate
from .sampler import (
    EpochManifest,
    SampleMode,
    SamplerConfig,
    derive_stream,
    manifest_stats,
    read_manifest,
    sample_epoch,
    write_manifest,
)
from .scaling import (
    ScalingPlan,
    compute_targets,
    describe_plan,
    largest_remainder,
    load_plan,
    sampling_rate,
    save_plan,
)
from .store import EmbeddingStore, load_embeddings, normalize, save_embeddings

__version__ = "0.1.0"

__all__ = [
    "AlphaSweepEntry",
    "ClusterAssignment",
    "ClusterModel",
    "ConfigError",
    "CoverageReport",
    "DegenerateVectorError",
    "DistributionReport",
    "DynamicsError",
    "EmbeddingStore",
    "EpochManifest",
    "FormatError",
    "GenerationError",
    "IntegrityError",
    "IoError",
    "KSweepEntry",
    "PipelineConfig",
    "SampleMode",
    "SamplerConfig",
    "ScalingPlan",
    "SphericalKMeans",
    "SyntheticSpec",
    "TruncationError",
    "alpha_sweep",
    "assign",
    "cluster_count_sweep",
    "compute_targets",
    "coverage_sim",
    "derive_stream",
    "describe_plan",
    "distribution_report",
    "expected_unique",
    "gen_synthetic",
    "gini",
    "largest_remainder",
    "load_assignment",
    "load_embeddings",
    "load_model",
    "load_plan",
    "manifest_stats",
    "merge_centroids",
    "normalize",
    "read_manifest",
    "recount_after_merge",
    "run_pipeline",
    "sample_epoch",
    "sampling_rate",
    "save_assignment",
    "save_embeddings",
    "save_model",
    "save_plan",
    "train_kmeans",
    "validate",
    "write_manifest",
]
