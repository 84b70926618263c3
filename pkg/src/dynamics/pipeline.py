"""End-to-end pipeline runs: ingest through manifests, with a config echo.

Every run writes its artifacts into one directory together with the resolved
configuration, so re-running with the echoed config reproduces the manifests
and reports byte for byte. Timestamps never enter any artifact; they are
confined to the default run-directory name and the structured log.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from . import cluster as clustering
from . import sampler as sampling
from .analysis import distribution_report
from .errors import DynamicsError
from .sampler import SampleMode, SamplerConfig
from .scaling import compute_targets, save_plan
from .store import load_embeddings, normalize, save_embeddings

log = logging.getLogger("dynamics")

# Paper-setting defaults: 10 k-means iterations with a 1000-point cap per
# centroid, merge threshold 0.7, exponent 0.2, budget 50% of the dataset.
DEFAULT_ITERATIONS = 10
DEFAULT_MAX_POINTS_PER_CENTROID = 1000
DEFAULT_MERGE_THRESHOLD = 0.7
DEFAULT_ALPHA = 0.2
DEFAULT_TARGET_FRACTION = 0.5


@dataclass
class PipelineConfig:
    """Resolved parameters for one full pipeline run."""

    input_path: str
    k: int
    iterations: int = DEFAULT_ITERATIONS
    max_points_per_centroid: int = DEFAULT_MAX_POINTS_PER_CENTROID
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD
    alpha: float = DEFAULT_ALPHA
    target_fraction: float = DEFAULT_TARGET_FRACTION
    seed: int = 0
    epochs: int = 1
    mode: str = SampleMode.CLUSTER_DYNAMIC.value
    shuffle: bool = False
    threads: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DynamicsError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise DynamicsError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DynamicsError(f"malformed config {path}: {exc}") from exc


def validate(config: PipelineConfig) -> list[str]:
    """List every constraint violation without touching any output path."""
    problems = []
    if config.k <= 0:
        problems.append(f"k must be a positive integer, got {config.k}")
    if config.iterations <= 0:
        problems.append(f"iterations must be >= 1, got {config.iterations}")
    if config.max_points_per_centroid <= 0:
        problems.append(
            f"max_points_per_centroid must be >= 1, got {config.max_points_per_centroid}"
        )
    if not 0.0 < config.merge_threshold <= 1.0:
        problems.append(
            f"merge threshold must lie in (0, 1], got {config.merge_threshold}"
        )
    if config.alpha < 0:
        problems.append(f"scaling exponent must be >= 0, got {config.alpha}")
    if not 0.0 < config.target_fraction <= 1.0:
        problems.append(
            f"target fraction must lie in (0, 1], got {config.target_fraction}"
        )
    if config.epochs < 0:
        problems.append(f"epochs must be >= 0, got {config.epochs}")
    if config.threads < 1:
        problems.append(f"threads must be >= 1, got {config.threads}")
    try:
        SampleMode.parse(config.mode)
    except DynamicsError as exc:
        problems.append(str(exc))

    path = Path(config.input_path)
    if not path.is_file():
        problems.append(f"input path does not exist: {path}")
    else:
        try:
            store = load_embeddings(path)
        except DynamicsError as exc:
            problems.append(f"input is not a readable embedding file: {exc}")
        else:
            if config.k > store.count:
                problems.append(
                    f"k={config.k} exceeds the {store.count} samples in the input"
                )
    return problems


class StageFailure(DynamicsError):
    """Wraps the underlying error with the name of the failing stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


class _StageLog:
    """Structured per-stage records: one JSON object per completed stage."""

    def __init__(self, path: Path):
        self.path = path
        self.records: list[dict] = []

    def run(self, stage: str, fn, **counters):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise StageFailure(stage, exc) from exc
        record = {"stage": stage, "seconds": time.perf_counter() - start, **counters}
        self.records.append(record)
        log.info(json.dumps(record))
        return result

    def flush(self):
        with open(self.path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record))
                fh.write("\n")


def run_pipeline(config: PipelineConfig, out_dir) -> Path:
    """Execute ingest -> normalize -> cluster -> merge -> scale -> sample.

    Artifacts land in ``out_dir`` (created if needed); partial artifacts are
    retained when a stage fails so the failure can be inspected.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    stages = _StageLog(out / "run.log")
    try:
        raw = stages.run("ingest", lambda: load_embeddings(config.input_path))
        store = stages.run("normalize", lambda: normalize(raw), samples=raw.count)
        stages.run(
            "write_normalized",
            lambda: save_embeddings(store, out / "embeddings_normalized.emb"),
        )

        model = stages.run(
            "train_kmeans",
            lambda: clustering.train_kmeans(
                store,
                config.k,
                iters=config.iterations,
                max_points_per_centroid=config.max_points_per_centroid,
                seed=config.seed,
            ),
            k=config.k,
        )
        stages.run("write_model", lambda: clustering.save_model(model, out / "model.bin"))

        assignment = stages.run(
            "assign",
            lambda: clustering.assign(store, model, threads=config.threads),
            samples=store.count,
        )
        stages.run(
            "write_assignment",
            lambda: clustering.save_assignment(assignment, out / "assignment.bin"),
        )

        merged = stages.run(
            "merge_centroids",
            lambda: clustering.merge_centroids(model, config.merge_threshold),
            threshold=config.merge_threshold,
        )
        stages.run(
            "write_merged_model",
            lambda: clustering.save_model(merged, out / "model_merged.bin"),
        )
        recounted = stages.run(
            "recount", lambda: clustering.recount_after_merge(assignment, merged),
            live_clusters=merged.k,
        )
        stages.run(
            "write_merged_assignment",
            lambda: clustering.save_assignment(recounted, out / "assignment_merged.bin"),
        )

        target_total = config.target_fraction * store.count
        plan = stages.run(
            "compute_targets",
            lambda: compute_targets(recounted.counts, config.alpha, target_total),
            alpha=config.alpha,
            target_total=target_total,
        )
        stages.run("write_plan", lambda: save_plan(plan, out / "plan.json"))

        mode = SampleMode.parse(config.mode)
        keep = config.target_fraction if mode in sampling.RANDOM_MODES else None
        if config.epochs > 0:
            sampler_config = SamplerConfig(
                mode=mode, seed=config.seed, epochs=config.epochs, keep_fraction=keep
            )
            for epoch in range(config.epochs):
                manifest = stages.run(
                    f"sample_epoch_{epoch}",
                    lambda e=epoch: sampling.sample_epoch(
                        recounted, plan, sampler_config, e,
                        shuffle=config.shuffle, threads=config.threads,
                    ),
                    epoch=epoch,
                )
                stages.run(
                    f"write_manifest_{epoch}",
                    lambda m=manifest, e=epoch: sampling.write_manifest(
                        m, out / f"manifest_epoch_{e:03d}.txt"
                    ),
                    entries=manifest.total,
                )

        report = {
            "schema": "dynamics-report/1",
            "kind": "pipeline",
            "clusters_trained": config.k,
            "clusters_live": merged.k,
            "counts": distribution_report(recounted.counts).to_dict(),
            "targets": distribution_report(plan.targets_int).to_dict(),
        }
        stages.run(
            "write_report",
            lambda: (out / "report.json").write_text(
                json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            ),
        )
    finally:
        stages.flush()
    return out


def default_run_dir(root=".") -> Path:
    """Timestamped directory name; the only place wall-clock time may appear."""
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(root) / f"run-{stamp}"
    candidate = base
    suffix = 1
    while candidate.exists():
        candidate = Path(f"{base}-{suffix}")
        suffix += 1
    return candidate
