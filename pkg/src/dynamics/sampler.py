"""Deterministic per-epoch manifest generation.

Every random decision is drawn from a counter-based stream (Philox) keyed by
a 64-bit mix of (seed, epoch, cluster), so clusters can be sampled in any
order, by any number of workers, and still produce byte-identical manifests.
Static modes fix the epoch component of the key to 0.

Per-epoch semantics per mode:

- ``cluster_dynamic``: each cluster contributes exactly its integer target;
  targets above the cluster size are met by whole-cluster replication plus a
  fresh without-replacement draw for the remainder.
- ``cluster_static``: the same draw with the epoch key pinned, so every epoch
  gets the identical subset.
- ``random_static``: one fixed uniform subset of ``floor(keep_fraction * n)``
  ids shared by all epochs.
- ``random_dynamic``: every id is kept independently with probability
  ``keep_fraction``, re-drawn each epoch.
- ``bernoulli_dynamic``: per cluster, each id appears ``floor(rate)`` times
  plus one more with probability ``rate - floor(rate)``, so the expected
  cluster total equals the integer target.

Manifests are canonically ordered by (cluster, id, copy); an optional seeded
shuffle is applied after construction for training consumption.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterAssignment
from .errors import ConfigError, FormatError, IntegrityError, IoError
from .parallel import parallel_map
from .scaling import ScalingPlan
from .validation import check_fraction

_MASK64 = (1 << 64) - 1
# Lanes outside the u32 cluster range, for draws not tied to one cluster.
_LANE_GLOBAL = 1 << 40
_LANE_SHUFFLE = (1 << 40) + 1

MANIFEST_VERSION = "v1"
_HEADER_RE = re.compile(
    r"^#dynamics-manifest v1 mode=(\S+) epoch=(\d+) seed=(-?\d+) total=(\d+)$"
)


class SampleMode(str, enum.Enum):
    CLUSTER_DYNAMIC = "cluster_dynamic"
    CLUSTER_STATIC = "cluster_static"
    RANDOM_STATIC = "random_static"
    RANDOM_DYNAMIC = "random_dynamic"
    BERNOULLI_DYNAMIC = "bernoulli_dynamic"

    @classmethod
    def parse(cls, text) -> "SampleMode":
        if isinstance(text, cls):
            return text
        token = str(text).strip().lower().replace("-", "_")
        try:
            return cls(token)
        except ValueError:
            raise ConfigError(
                f"unknown sampling mode {text!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


RANDOM_MODES = frozenset({SampleMode.RANDOM_STATIC, SampleMode.RANDOM_DYNAMIC})


def _mix64(z: int) -> int:
    """SplitMix64 finalizer: a strong 64-bit bijective mix."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_stream(seed: int, epoch: int, cluster: int) -> np.random.Generator:
    """Counter-based stream keyed by a 64-bit mix of (seed, epoch, cluster).

    Distinct key tuples give independent streams; the same tuple always
    replays the same sequence.
    """
    acc = int(seed) & _MASK64
    for word in (int(epoch), int(cluster)):
        acc = (acc + 0x9E3779B97F4A7C15) & _MASK64
        acc = _mix64(acc ^ (word & _MASK64))
    key = np.array([acc, _mix64(acc + 0x9E3779B97F4A7C15)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SamplerConfig:
    """Mode, seed, and epoch budget for manifest generation.

    ``keep_fraction`` is required for the random modes and must be absent for
    cluster-based modes, which take their budgets from the plan.
    """

    mode: SampleMode
    seed: int = 0
    epochs: int = 1
    keep_fraction: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SampleMode.parse(self.mode))
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.mode in RANDOM_MODES:
            if self.keep_fraction is None:
                raise ConfigError(f"mode {self.mode.value} requires keep_fraction")
            object.__setattr__(
                self, "keep_fraction", check_fraction(self.keep_fraction, "keep_fraction")
            )
        elif self.keep_fraction is not None:
            raise ConfigError(f"mode {self.mode.value} does not take keep_fraction")


@dataclass(frozen=True)
class EpochManifest:
    """The exact multiset of (sample id, cluster) entries for one epoch."""

    mode: SampleMode
    epoch: int
    seed: int
    ids: np.ndarray = field(repr=False)
    clusters: np.ndarray = field(repr=False)

    @property
    def total(self) -> int:
        return self.ids.shape[0]

    def header(self) -> str:
        return (
            f"#dynamics-manifest {MANIFEST_VERSION} mode={self.mode.value} "
            f"epoch={self.epoch} seed={self.seed} total={self.total}"
        )


def _cluster_slices(assignment: ClusterAssignment) -> list[np.ndarray]:
    """Ids of each cluster, ascending within the cluster."""
    order = np.argsort(assignment.labels, kind="stable")
    sorted_ids = assignment.ids[order]
    bounds = np.concatenate(([0], np.cumsum(assignment.counts)))
    return [sorted_ids[bounds[i] : bounds[i + 1]] for i in range(assignment.n_clusters)]


def _draw_cluster(ids: np.ndarray, target: int, stream: np.random.Generator) -> np.ndarray:
    """Exactly ``target`` entries: whole copies plus a without-replacement draw."""
    c = ids.shape[0]
    if target == 0:
        return ids[:0]
    if c == 0:
        raise IntegrityError("cannot sample from an empty cluster")
    full, rem = divmod(target, c)
    multiplicity = np.full(c, full, dtype=np.int64)
    if rem:
        extra = stream.choice(c, size=rem, replace=False)
        multiplicity[extra] += 1
    return np.repeat(ids, multiplicity)


def _bernoulli_cluster(ids: np.ndarray, target: int, stream: np.random.Generator) -> np.ndarray:
    c = ids.shape[0]
    if c == 0:
        if target > 0:
            raise IntegrityError("cannot sample from an empty cluster")
        return ids[:0]
    full, rem = divmod(target, c)
    multiplicity = np.full(c, full, dtype=np.int64)
    if rem:
        multiplicity += stream.random(c) < (rem / c)
    return np.repeat(ids, multiplicity)


def sample_epoch(
    assignment: ClusterAssignment,
    plan: ScalingPlan,
    config: SamplerConfig,
    epoch: int,
    shuffle: bool = False,
    threads: int = 1,
) -> EpochManifest:
    """Generate the canonical manifest for one epoch under ``config.mode``."""
    epoch = int(epoch)
    if not 0 <= epoch < int(config.epochs):
        raise ConfigError(f"epoch {epoch} outside the configured range [0, {config.epochs})")
    if not np.array_equal(plan.counts, assignment.counts):
        raise IntegrityError("plan counts do not match assignment counts")

    mode = config.mode
    seed = int(config.seed)

    if mode in RANDOM_MODES:
        ids, clusters = _sample_random(assignment, config, epoch)
    else:
        stream_epoch = 0 if mode is SampleMode.CLUSTER_STATIC else epoch
        draw = _bernoulli_cluster if mode is SampleMode.BERNOULLI_DYNAMIC else _draw_cluster
        per_cluster = _cluster_slices(assignment)
        targets = plan.targets_int

        def sample_one(i: int) -> np.ndarray:
            return draw(per_cluster[i], int(targets[i]), derive_stream(seed, stream_epoch, i))

        picked = parallel_map(sample_one, range(assignment.n_clusters), threads)
        ids = np.concatenate(picked) if picked else np.empty(0, dtype=np.uint64)
        clusters = np.repeat(
            np.arange(assignment.n_clusters, dtype=np.uint32),
            [p.shape[0] for p in picked],
        )

    if shuffle and ids.size:
        perm = derive_stream(seed, epoch, _LANE_SHUFFLE).permutation(ids.size)
        ids, clusters = ids[perm], clusters[perm]

    return EpochManifest(mode=mode, epoch=epoch, seed=seed, ids=ids, clusters=clusters)


def _sample_random(assignment, config, epoch):
    """Uniform subset draws that ignore the plan budgets."""
    n = assignment.n_samples
    keep = float(config.keep_fraction)
    if config.mode is SampleMode.RANDOM_STATIC:
        size = int(np.floor(keep * n))
        stream = derive_stream(config.seed, 0, _LANE_GLOBAL)
        mask = np.zeros(n, dtype=bool)
        if size:
            mask[stream.choice(n, size=size, replace=False)] = True
    else:
        stream = derive_stream(config.seed, epoch, _LANE_GLOBAL)
        mask = stream.random(n) < keep
    ids = assignment.ids[mask]
    clusters = assignment.labels[mask]
    order = np.argsort(clusters, kind="stable")  # ids ascend, so this is (cluster, id)
    return ids[order], clusters[order]


def manifest_stats(manifest: EpochManifest, n_clusters: int | None = None) -> np.ndarray:
    """Exact entry multiplicity per cluster."""
    if manifest.total == 0:
        return np.zeros(0 if n_clusters is None else int(n_clusters), dtype=np.int64)
    minlength = 0 if n_clusters is None else int(n_clusters)
    return np.bincount(manifest.clusters, minlength=minlength).astype(np.int64)


def write_manifest(manifest: EpochManifest, path) -> None:
    """UTF-8 text: provenance header line, then one "id<TAB>cluster" per entry."""
    lines = [manifest.header()]
    lines.extend(
        f"{int(i)}\t{int(c)}" for i, c in zip(manifest.ids.tolist(), manifest.clusters.tolist())
    )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest to {path}: {exc}") from exc


def read_manifest(path) -> EpochManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read manifest from {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty manifest file")
    match = _HEADER_RE.match(lines[0])
    if not match:
        raise FormatError(f"{path}: bad manifest header {lines[0]!r}")
    mode, epoch, seed, total = match.groups()
    body = lines[1:]
    if len(body) != int(total):
        raise FormatError(
            f"{path}: header declares {total} entries but file has {len(body)}"
        )
    ids = np.empty(len(body), dtype=np.uint64)
    clusters = np.empty(len(body), dtype=np.uint32)
    for row, line in enumerate(body):
        try:
            id_text, cluster_text = line.split("\t")
            ids[row] = int(id_text)
            clusters[row] = int(cluster_text)
        except ValueError as exc:
            raise FormatError(f"{path}: bad manifest line {row + 2}: {line!r}") from exc
    return EpochManifest(
        mode=SampleMode.parse(mode),
        epoch=int(epoch),
        seed=int(seed),
        ids=ids,
        clusters=clusters,
    )
