"""Spherical k-means, cosine assignment, and centroid merging.

The estimator :class:`SphericalKMeans` follows the scikit-learn protocol
(``fit`` / ``predict`` / ``get_params``) so it drops into pipelines and model
selection tooling. :class:`ClusterModel` is the serializable artifact the
rest of the pipeline consumes: live centroids plus the lineage map recording
which original centroids were folded together by :func:`merge_centroids`.

All cosine similarities are computed in float64 so assignments are exactly
reproducible against an exhaustive per-point scan, with ties broken toward
the lowest cluster index.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .errors import ConfigError, FormatError, IntegrityError, IoError, TruncationError
from .parallel import parallel_map
from .store import EmbeddingStore
from .validation import as_counts, as_ids, as_rows, check_positive_int, check_unit_rows

ASSIGN_CHUNK = 8192
_PAIR = np.dtype([("id", "<u8"), ("cluster", "<u4")])


def _similarities(rows: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Cosine similarity block in float64 (rows and centroids unit-norm)."""
    return rows.astype(np.float64, copy=False) @ centroids.astype(np.float64, copy=False).T


def _assign_block(rows: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sims = _similarities(rows, centroids)
    labels = np.argmax(sims, axis=1)  # first max wins: lowest-index tie-break
    best = sims[np.arange(sims.shape[0]), labels]
    return labels.astype(np.uint32), best


class SphericalKMeans(BaseEstimator, ClusterMixin):
    """K-means on the unit sphere with cosine similarity as the affinity.

    Centroid updates renormalize the mean of the assigned points, which is
    the maximizer of within-cluster cosine to a single direction, so the
    objective (sum over training points of similarity to the nearest
    centroid) is non-decreasing per iteration. Empty clusters are re-seeded
    from the training point least similar to its own centroid.

    When the input exceeds ``n_clusters * max_points_per_centroid`` rows, a
    uniform random training subset of that size is drawn under
    ``random_state``; ``predict`` always scores every row.

    Parameters
    ----------
    n_clusters : number of centroids to fit.
    n_iter : fixed number of update iterations.
    max_points_per_centroid : cap on training points per centroid.
    init : "random" for seeded init from the training subset, or an
        (n_clusters, dim) array of starting centroids.
    random_state : seed for subsampling and initialization.

    Attributes
    ----------
    cluster_centers_ : (n_clusters, dim) float32 unit-norm centroids.
    labels_ : assignment of every fit row to its nearest centroid.
    objective_trace_ : per-iteration training objective, non-decreasing.
    """

    def __init__(
        self,
        n_clusters: int = 8,
        n_iter: int = 10,
        max_points_per_centroid: int = 1000,
        init="random",
        random_state: int = 0,
    ):
        self.n_clusters = n_clusters
        self.n_iter = n_iter
        self.max_points_per_centroid = max_points_per_centroid
        self.init = init
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_rows(X)
        check_unit_rows(X)
        k = check_positive_int(self.n_clusters, "n_clusters")
        iters = check_positive_int(self.n_iter, "n_iter")
        cap = check_positive_int(self.max_points_per_centroid, "max_points_per_centroid")
        n = X.shape[0]
        if k > n:
            raise ConfigError(f"n_clusters={k} exceeds the {n} available points")

        rng = np.random.default_rng(self.random_state)
        if n > k * cap:
            subset = np.sort(rng.choice(n, size=k * cap, replace=False))
            train = X[subset]
        else:
            train = X

        if isinstance(self.init, str):
            if self.init != "random":
                raise ConfigError(f"unknown init {self.init!r}")
            pick = rng.choice(train.shape[0], size=k, replace=False)
            centroids = train[pick].astype(np.float64)
        else:
            centroids = as_rows(self.init, dim=X.shape[1]).astype(np.float64)
            if centroids.shape[0] != k:
                raise ConfigError(
                    f"init array has {centroids.shape[0]} rows, expected n_clusters={k}"
                )
            check_unit_rows(centroids, what="init centroids")

        trace = []
        for _ in range(iters):
            labels, best = self._assign_full(train, centroids)
            trace.append(float(best.sum()))
            centroids = self._update(train, labels, best, centroids)

        self.cluster_centers_ = centroids.astype(np.float32)
        self.objective_trace_ = trace
        self.n_iter_ = iters
        self.labels_ = self.predict(X)
        return self

    def predict(self, X):
        X = as_rows(X, dim=self.cluster_centers_.shape[1])
        labels = np.empty(X.shape[0], dtype=np.uint32)
        for start in range(0, X.shape[0], ASSIGN_CHUNK):
            block = slice(start, start + ASSIGN_CHUNK)
            labels[block] = _assign_block(X[block], self.cluster_centers_)[0]
        return labels

    def _assign_full(self, rows, centroids):
        labels = np.empty(rows.shape[0], dtype=np.uint32)
        best = np.empty(rows.shape[0], dtype=np.float64)
        for start in range(0, rows.shape[0], ASSIGN_CHUNK):
            block = slice(start, start + ASSIGN_CHUNK)
            labels[block], best[block] = _assign_block(rows[block], centroids)
        return labels, best

    def _update(self, train, labels, best, centroids):
        k, dim = centroids.shape
        sums = np.empty((k, dim), dtype=np.float64)
        for d in range(dim):
            sums[:, d] = np.bincount(labels, weights=train[:, d], minlength=k)
        norms = np.linalg.norm(sums, axis=1)
        nonzero = norms > 0.0
        out = centroids.copy()  # zero-sum clusters keep their centroid
        out[nonzero] = sums[nonzero] / norms[nonzero, None]

        occupancy = np.bincount(labels, minlength=k)
        empties = np.flatnonzero(occupancy == 0)
        if empties.size:
            # Worst-served training points become the new seeds.
            worst = np.argsort(best, kind="stable")[: empties.size]
            out[empties] = train[worst].astype(np.float64)
        return out


@dataclass(frozen=True)
class ClusterModel:
    """Live centroids plus the lineage from original to final cluster index.

    ``lineage[i]`` gives the live index that original centroid ``i`` ended up
    in; for an unmerged model it is the identity. ``threshold_applied`` is the
    most recent merge threshold, or None if never merged.
    """

    centroids: np.ndarray = field(repr=False)
    lineage: np.ndarray = field(repr=False)
    threshold_applied: float | None = None

    def __post_init__(self):
        centroids = as_rows(self.centroids)
        check_unit_rows(centroids, what="centroids")
        lineage = np.ascontiguousarray(self.lineage, dtype=np.int64)
        if lineage.ndim != 1:
            raise ConfigError("lineage must be 1-dimensional")
        k = centroids.shape[0]
        if lineage.size and (lineage.min() < 0 or lineage.max() >= k):
            raise IntegrityError("lineage maps outside the live centroid range")
        if not np.array_equal(np.unique(lineage), np.arange(k)):
            raise IntegrityError("lineage must map onto every live cluster")
        object.__setattr__(self, "centroids", centroids)
        object.__setattr__(self, "lineage", lineage)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    @classmethod
    def from_centroids(cls, centroids) -> "ClusterModel":
        centroids = as_rows(centroids)
        return cls(centroids=centroids, lineage=np.arange(centroids.shape[0]))


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-sample cluster labels and the derived per-cluster counts.

    Zero-count clusters keep their index so cluster indices stay stable
    through merging and manifest generation.
    """

    ids: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        ids = as_ids(self.ids)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
        counts = as_counts(self.counts)
        if labels.shape != ids.shape:
            raise IntegrityError("labels and ids must align")
        if labels.size and int(labels.max()) >= counts.size:
            raise IntegrityError("label outside the counts range")
        recount = np.bincount(labels, minlength=counts.size)
        if not np.array_equal(recount, counts):
            raise IntegrityError("counts do not match the label multiplicities")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "counts", counts)

    @property
    def n_samples(self) -> int:
        return self.ids.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def from_labels(cls, ids, labels, n_clusters: int) -> "ClusterAssignment":
        labels = np.ascontiguousarray(labels, dtype=np.uint32)
        counts = np.bincount(labels, minlength=n_clusters).astype(np.int64)
        return cls(ids=ids, labels=labels, counts=counts)


def train_kmeans(
    store: EmbeddingStore,
    k: int,
    iters: int = 10,
    max_points_per_centroid: int = 1000,
    seed: int = 0,
    init="random",
) -> ClusterModel:
    """Fit spherical k-means on a normalized store and wrap it as a model."""
    est = SphericalKMeans(
        n_clusters=k,
        n_iter=iters,
        max_points_per_centroid=max_points_per_centroid,
        init=init,
        random_state=seed,
    )
    est.fit(store.rows)
    return ClusterModel.from_centroids(est.cluster_centers_)


def assign(store: EmbeddingStore, model: ClusterModel, threads: int = 1) -> ClusterAssignment:
    """Map every sample to its highest-cosine centroid (ties: lowest index).

    Chunks are scored independently, so results are identical for any
    ``threads`` value.
    """
    if store.dim != model.dim:
        raise ConfigError(f"store dim {store.dim} != model dim {model.dim}")
    check_unit_rows(store.rows)
    rows = store.rows
    chunks = [slice(s, s + ASSIGN_CHUNK) for s in range(0, rows.shape[0], ASSIGN_CHUNK)]
    results = parallel_map(
        lambda block: _assign_block(rows[block], model.centroids)[0], chunks, threads
    )
    labels = np.concatenate(results) if results else np.empty(0, dtype=np.uint32)
    return ClusterAssignment.from_labels(store.ids, labels, model.k)


def merge_centroids(model: ClusterModel, threshold: float) -> ClusterModel:
    """Greedily merge the most-similar centroid pair until none exceeds the threshold.

    Each merge replaces the pair with the renormalized mean weighted by how
    many original centroids each side has absorbed, guaranteeing the
    post-condition: no live pair has cosine similarity above ``threshold``.
    Live clusters are renumbered by their smallest original index, and
    ``lineage`` is composed accordingly.
    """
    threshold = float(threshold)
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"merge threshold must lie in (0, 1], got {threshold}")

    cent = model.centroids.astype(np.float64)
    k = cent.shape[0]
    weights = np.bincount(model.lineage, minlength=k).astype(np.float64)
    alive = np.ones(k, dtype=bool)
    # slot j of the pre-merge model -> slot it was folded into
    fold = np.arange(k)

    sims = cent @ cent.T
    np.fill_diagonal(sims, -np.inf)

    while True:
        flat = int(np.argmax(sims))
        i, j = divmod(flat, k)
        if sims[i, j] <= threshold:
            break
        if j < i:  # row-major argmax visits (i, j) with i < j first; keep low slot
            i, j = j, i
        merged = weights[i] * cent[i] + weights[j] * cent[j]
        norm = np.linalg.norm(merged)
        if norm == 0.0:
            raise IntegrityError("merge produced a zero-norm centroid")
        cent[i] = merged / norm
        weights[i] += weights[j]
        alive[j] = False
        fold[fold == j] = i
        sims[j, :] = -np.inf
        sims[:, j] = -np.inf
        row = cent @ cent[i]
        row[~alive] = -np.inf
        row[i] = -np.inf
        sims[i, :] = row
        sims[:, i] = row

    live = np.flatnonzero(alive)
    rank = np.full(k, -1, dtype=np.int64)
    rank[live] = np.arange(live.size)
    lineage = rank[fold[model.lineage]]
    return ClusterModel(
        centroids=cent[live].astype(np.float32),
        lineage=lineage,
        threshold_applied=threshold,
    )


def recount_after_merge(assignment: ClusterAssignment, model: ClusterModel) -> ClusterAssignment:
    """Re-map a pre-merge assignment through the model lineage and recount."""
    lineage = model.lineage
    labels = assignment.labels
    if labels.size and int(labels.max()) >= lineage.size:
        raise IntegrityError(
            f"assignment references cluster {int(labels.max())} outside the lineage "
            f"domain of size {lineage.size}"
        )
    remapped = lineage[labels].astype(np.uint32)
    return ClusterAssignment.from_labels(assignment.ids, remapped, model.k)


def save_model(model: ClusterModel, path) -> None:
    """Write a model file: one JSON header line, then the float32 centroid block."""
    header = {
        "k": model.k,
        "dim": model.dim,
        "threshold_applied": model.threshold_applied,
        "lineage": model.lineage.tolist(),
    }
    try:
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode("utf-8"))
            fh.write(b"\n")
            fh.write(np.ascontiguousarray(model.centroids, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write model to {path}: {exc}") from exc


def load_model(path) -> ClusterModel:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model from {path}: {exc}") from exc
    sep = blob.find(b"\n")
    if sep < 0:
        raise FormatError(f"{path}: missing JSON header line")
    try:
        header = json.loads(blob[:sep].decode("utf-8"))
        k, dim = int(header["k"]), int(header["dim"])
        lineage = header["lineage"]
        threshold = header["threshold_applied"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed model header: {exc}") from exc
    payload = blob[sep + 1 :]
    if len(payload) < k * dim * 4:
        raise TruncationError(f"{path}: centroid block shorter than k*dim floats")
    centroids = np.frombuffer(payload, dtype="<f4", count=k * dim).reshape(k, dim)
    return ClusterModel(
        centroids=centroids,
        lineage=np.asarray(lineage, dtype=np.int64),
        threshold_applied=None if threshold is None else float(threshold),
    )


def save_assignment(assignment: ClusterAssignment, path) -> None:
    """Write little-endian (id u64, cluster u32) pairs, nothing else."""
    pairs = np.empty(assignment.n_samples, dtype=_PAIR)
    pairs["id"] = assignment.ids
    pairs["cluster"] = assignment.labels
    try:
        with open(path, "wb") as fh:
            fh.write(pairs.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write assignment to {path}: {exc}") from exc


def load_assignment(path, n_clusters: int | None = None) -> ClusterAssignment:
    """Read (u64, u32) pairs.

    The pair format carries no cluster count, so trailing zero-count clusters
    are only recoverable when the caller passes ``n_clusters`` (e.g. from the
    model file).
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read assignment from {path}: {exc}") from exc
    if len(blob) % _PAIR.itemsize:
        raise FormatError(f"{path}: payload is not a whole number of (u64, u32) pairs")
    pairs = np.frombuffer(blob, dtype=_PAIR)
    if n_clusters is None:
        n_clusters = int(pairs["cluster"].max()) + 1 if pairs.size else 0
    return ClusterAssignment.from_labels(pairs["id"], pairs["cluster"], n_clusters)
