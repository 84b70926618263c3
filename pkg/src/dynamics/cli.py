"""Command-line entry points.

Subcommands mirror the pipeline stages (ingest, cluster, merge, scale,
sample), plus analysis tooling (analyze, synth, sweep-alpha, sweep-k,
simulate-coverage) and the orchestrated ``run`` / ``validate`` pair.

Configuration precedence for ``run``: explicit flags > --config file >
built-in defaults. ``--threads`` falls back to the DYNAMICS_THREADS
environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import cluster as clustering
from .analysis import (
    DEFAULT_ALPHA_GRID,
    SyntheticSpec,
    alpha_sweep,
    cluster_count_sweep,
    coverage_sim,
    distribution_report,
    gen_synthetic,
)
from .errors import DynamicsError
from .pipeline import (
    DEFAULT_ALPHA,
    DEFAULT_ITERATIONS,
    DEFAULT_MAX_POINTS_PER_CENTROID,
    DEFAULT_MERGE_THRESHOLD,
    DEFAULT_TARGET_FRACTION,
    PipelineConfig,
    StageFailure,
    default_run_dir,
    run_pipeline,
    validate,
)
from .sampler import SampleMode, SamplerConfig, manifest_stats, read_manifest, sample_epoch, write_manifest
from .scaling import compute_targets, load_plan, save_plan
from .store import load_embeddings, normalize, save_embeddings

log = logging.getLogger("dynamics")


def _env_threads() -> int | None:
    raw = os.environ.get("DYNAMICS_THREADS")
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        return None


def _write_json(data: dict, path: str | None) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _counts_from_args(args) -> np.ndarray:
    """Shared --counts / --plan / --assignment source resolution."""
    given = [name for name in ("counts", "plan", "assignment") if getattr(args, name, None)]
    if len(given) != 1:
        raise DynamicsError("provide exactly one of --counts, --plan, --assignment")
    if args.counts:
        try:
            with open(args.counts, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DynamicsError(f"cannot read counts from {args.counts}: {exc}") from exc
        if isinstance(data, dict):
            if "counts" not in data:
                raise DynamicsError(f"{args.counts}: JSON object has no 'counts' field")
            data = data["counts"]
        return np.asarray(data, dtype=np.int64)
    if args.plan:
        return load_plan(args.plan).counts
    return clustering.load_assignment(args.assignment).counts


def cmd_ingest(args) -> int:
    store = load_embeddings(args.input)
    if not args.no_normalize:
        store = normalize(store)
    save_embeddings(store, args.out)
    log.info("ingested %d samples of dim %d -> %s", store.count, store.dim, args.out)
    return 0


def cmd_cluster(args) -> int:
    store = load_embeddings(args.input)
    model = clustering.train_kmeans(
        store,
        args.k,
        iters=args.iters,
        max_points_per_centroid=args.max_points_per_centroid,
        seed=args.seed,
    )
    clustering.save_model(model, args.model_out)
    if args.assignment_out:
        assignment = clustering.assign(store, model, threads=args.threads or 1)
        clustering.save_assignment(assignment, args.assignment_out)
    return 0


def cmd_merge(args) -> int:
    model = clustering.load_model(args.model)
    merged = clustering.merge_centroids(model, args.threshold)
    clustering.save_model(merged, args.out)
    log.info("merged %d -> %d live clusters", model.k, merged.k)
    if args.assignment and args.assignment_out:
        assignment = clustering.load_assignment(args.assignment, n_clusters=model.k)
        recounted = clustering.recount_after_merge(assignment, merged)
        clustering.save_assignment(recounted, args.assignment_out)
    return 0


def cmd_scale(args) -> int:
    counts = _counts_from_args(args)
    if args.target_total is not None:
        target = args.target_total
    else:
        target = args.target_fraction * float(counts.sum())
    plan = compute_targets(counts, args.alpha, target)
    save_plan(plan, args.out)
    return 0


def cmd_sample(args) -> int:
    plan = load_plan(args.plan)
    assignment = clustering.load_assignment(args.assignment, n_clusters=plan.n_clusters)
    config = SamplerConfig(
        mode=SampleMode.parse(args.mode),
        seed=args.seed,
        epochs=max(args.epochs, args.epoch + 1),
        keep_fraction=args.keep_fraction,
    )
    manifest = sample_epoch(
        assignment, plan, config, args.epoch, shuffle=args.shuffle, threads=args.threads or 1
    )
    write_manifest(manifest, args.out)
    return 0


def cmd_analyze(args) -> int:
    if args.manifest:
        counts = manifest_stats(read_manifest(args.manifest))
    elif args.plan:
        counts = load_plan(args.plan).targets_int  # the planned distribution
    else:
        counts = _counts_from_args(args)
    report = distribution_report(counts, tail_threshold=args.tail_threshold)
    _write_json(report.to_dict(), args.out)
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_clusters=args.clusters,
        zipf_exponent=args.zipf,
        total_samples=args.total,
        dim=args.dim,
        intra_cluster_noise=args.noise,
        seed=args.seed,
    )
    store, truth = gen_synthetic(spec)
    save_embeddings(store, f"{args.out}.emb")
    clustering.save_assignment(truth, f"{args.out}.truth.bin")
    _write_json(
        {
            "schema": "dynamics-report/1",
            "kind": "synthetic",
            "sizes": truth.counts.tolist(),
        },
        f"{args.out}.sizes.json",
    )
    log.info("wrote %s.emb with %d samples in %d clusters", args.out, store.count, args.clusters)
    return 0


def cmd_sweep_alpha(args) -> int:
    counts = _counts_from_args(args)
    alphas = [float(a) for a in args.alphas.split(",")] if args.alphas else list(DEFAULT_ALPHA_GRID)
    entries = alpha_sweep(counts, alphas, target_total=args.target_total)
    _write_json(
        {
            "schema": "dynamics-report/1",
            "kind": "alpha_sweep",
            "entries": [entry.to_dict() for entry in entries],
        },
        args.out,
    )
    return 0


def cmd_sweep_k(args) -> int:
    store = load_embeddings(args.input)
    ks = [int(k) for k in args.ks.split(",")]
    entries = cluster_count_sweep(
        store,
        ks,
        iters=args.iters,
        max_points_per_centroid=args.max_points_per_centroid,
        merge_threshold=args.merge_threshold,
        alpha=args.alpha,
        target_fraction=args.target_fraction,
        seed=args.seed,
    )
    _write_json(
        {
            "schema": "dynamics-report/1",
            "kind": "k_sweep",
            "entries": [entry.to_dict() for entry in entries],
        },
        args.out,
    )
    return 0


def cmd_simulate_coverage(args) -> int:
    plan = load_plan(args.plan)
    config = SamplerConfig(
        mode=SampleMode.parse(args.mode),
        seed=args.seed,
        epochs=args.epochs,
        keep_fraction=args.keep_fraction,
    )
    report = coverage_sim(plan, config, epochs=args.epochs, trials=args.trials)
    _write_json(report.to_dict(), args.out)
    return 0


def _config_from_args(args) -> PipelineConfig:
    base = PipelineConfig.load(args.config).to_dict() if args.config else {}
    overrides = {
        "input_path": args.input,
        "k": args.k,
        "iterations": args.iters,
        "max_points_per_centroid": args.max_points_per_centroid,
        "merge_threshold": args.merge_threshold,
        "alpha": args.alpha,
        "target_fraction": args.target_fraction,
        "seed": args.seed,
        "epochs": args.epochs,
        "mode": args.mode,
        "shuffle": args.shuffle or None,
        "threads": args.threads,
    }
    merged = dict(base)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged.setdefault("shuffle", False)
    if "input_path" not in merged or "k" not in merged:
        raise DynamicsError("--input and --k are required (directly or via --config)")
    return PipelineConfig.from_dict(merged)


def cmd_run(args) -> int:
    config = _config_from_args(args)
    out_dir = args.out_dir or default_run_dir()
    result = run_pipeline(config, out_dir)
    log.info("run complete: %s", result)
    print(result)
    return 0


def cmd_validate(args) -> int:
    config = _config_from_args(args)
    problems = validate(config)
    for problem in problems:
        print(problem)
    if not problems:
        print("ok")
    return 0


def _add_counts_sources(parser, with_assignment: bool = True) -> None:
    parser.add_argument("--counts", help="JSON file holding a count vector")
    parser.add_argument("--plan", help="plan JSON to take counts from")
    if with_assignment:
        parser.add_argument("--assignment", help="binary assignment file to recount")


def _add_run_flags(parser) -> None:
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--input", help="EMB1 embedding file")
    parser.add_argument("--k", type=int, help="number of clusters")
    parser.add_argument("--iters", type=int, default=None, help=f"k-means iterations (default {DEFAULT_ITERATIONS})")
    parser.add_argument(
        "--max-points-per-centroid", type=int, default=None,
        help=f"training subset cap per centroid (default {DEFAULT_MAX_POINTS_PER_CENTROID})",
    )
    parser.add_argument(
        "--merge-threshold", type=float, default=None,
        help=f"cosine threshold for centroid merging (default {DEFAULT_MERGE_THRESHOLD})",
    )
    parser.add_argument("--alpha", type=float, default=None, help=f"scaling exponent (default {DEFAULT_ALPHA})")
    parser.add_argument(
        "--target-fraction", type=float, default=None,
        help=f"per-epoch budget as a fraction of the dataset (default {DEFAULT_TARGET_FRACTION})",
    )
    parser.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    parser.add_argument("--epochs", type=int, default=None, help="number of epoch manifests (default 1)")
    parser.add_argument(
        "--mode", default=None,
        help="sampling mode: " + ", ".join(m.value.replace("_", "-") for m in SampleMode),
    )
    parser.add_argument("--shuffle", action="store_true", help="seeded shuffle of each manifest")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (env DYNAMICS_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynamics",
        description="Cluster, rescale, and dynamically sample embedding collections.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, normalize, and rewrite an embedding file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-normalize", action="store_true", help="copy without normalizing")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("cluster", help="train spherical k-means and assign every sample")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--iters", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--max-points-per-centroid", type=int, default=DEFAULT_MAX_POINTS_PER_CENTROID)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-out", required=True)
    p.add_argument("--assignment-out")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("merge", help="merge similar centroids and optionally recount")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_MERGE_THRESHOLD)
    p.add_argument("--out", required=True)
    p.add_argument("--assignment", help="pre-merge assignment to recount")
    p.add_argument("--assignment-out", help="where to write the recounted assignment")
    p.set_defaults(fn=cmd_merge)

    p = sub.add_parser("scale", help="compute per-cluster targets and rates")
    _add_counts_sources(p)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--target-total", type=float, default=None)
    p.add_argument("--target-fraction", type=float, default=DEFAULT_TARGET_FRACTION)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_scale)

    p = sub.add_parser("sample", help="write one epoch manifest")
    p.add_argument("--mode", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--epoch", type=int, required=True)
    p.add_argument("--epochs", type=int, default=1, help="total epochs in the schedule")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-fraction", type=float, default=None, help="for random modes")
    p.add_argument("--shuffle", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("analyze", help="distribution report for counts, a plan, or a manifest")
    _add_counts_sources(p)
    p.add_argument("--manifest", help="manifest file to recount")
    p.add_argument("--tail-threshold", type=int, default=1000)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic long-tail embedding collection")
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--zipf", type=float, default=1.2)
    p.add_argument("--total", type=int, required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("sweep-alpha", help="distribution reports across an exponent grid")
    _add_counts_sources(p)
    p.add_argument("--alphas", default=",".join(str(a) for a in DEFAULT_ALPHA_GRID))
    p.add_argument("--target-total", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_sweep_alpha)

    p = sub.add_parser("sweep-k", help="full pipeline at several cluster counts")
    p.add_argument("--input", required=True)
    p.add_argument("--ks", required=True, help="comma-separated cluster counts")
    p.add_argument("--iters", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--max-points-per-centroid", type=int, default=DEFAULT_MAX_POINTS_PER_CENTROID)
    p.add_argument("--merge-threshold", type=float, default=DEFAULT_MERGE_THRESHOLD)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--target-fraction", type=float, default=DEFAULT_TARGET_FRACTION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_sweep_k)

    p = sub.add_parser("simulate-coverage", help="multi-epoch unique-coverage simulation")
    p.add_argument("--plan", required=True)
    p.add_argument("--mode", default=SampleMode.CLUSTER_DYNAMIC.value)
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-fraction", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(fn=cmd_simulate_coverage)

    p = sub.add_parser("run", help="full pipeline into a run directory")
    _add_run_flags(p)
    p.add_argument("--out-dir", help="run directory (default: timestamped)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("validate", help="report config problems without running")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "threads") and args.threads is None:
        args.threads = _env_threads()  # still None when the env var is unset
    try:
        return args.fn(args)
    except StageFailure as exc:
        print(f"error in stage {exc.stage!r}: {exc.cause}", file=sys.stderr)
        return 2
    except DynamicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
