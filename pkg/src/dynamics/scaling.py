"""Per-cluster resampling targets and sampling rates.

Given cluster sizes ``c`` and a budget ``T``, each cluster's real target is

    target_i = c_i ** alpha / sum_j(c_j ** alpha) * T

over the positive-count clusters (empty clusters contribute nothing to the
denominator and receive target 0, for every alpha including 0). Real targets
are integerized by largest-remainder apportionment so the integer targets sum
to ``round(T)`` exactly, and each cluster's sampling rate is its integer
target divided by its size. Rates above 1 mark clusters that will be
upsampled within an epoch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrityError, IoError
from .validation import as_counts, check_alpha

PLAN_SCHEMA = "dynamics-plan/1"


def largest_remainder(values: np.ndarray, total: int) -> np.ndarray:
    """Round non-negative reals to integers summing exactly to ``total``.

    Floors everything, then hands the leftover units to the largest
    fractional parts; ties go to the lower index.
    """
    values = np.asarray(values, dtype=np.float64)
    if total < 0:
        raise ConfigError(f"apportionment total must be >= 0, got {total}")
    floors = np.floor(values).astype(np.int64)
    leftover = int(total) - int(floors.sum())
    if leftover < 0:
        raise ConfigError("apportionment total is below the sum of floors")
    if leftover > values.size:
        raise ConfigError("apportionment total exceeds the sum of ceilings")
    if leftover:
        order = np.lexsort((np.arange(values.size), -(values - floors)))
        floors[order[:leftover]] += 1
    return floors


@dataclass(frozen=True)
class ScalingPlan:
    """Frozen result of target computation for one (counts, alpha, T) input."""

    alpha: float
    target_total: float
    counts: np.ndarray = field(repr=False)
    targets_real: np.ndarray = field(repr=False)
    targets_int: np.ndarray = field(repr=False)
    rates: np.ndarray = field(repr=False)

    @property
    def n_clusters(self) -> int:
        return self.counts.shape[0]

    def to_dict(self) -> dict:
        return {
            "schema": PLAN_SCHEMA,
            "alpha": self.alpha,
            "target_total": self.target_total,
            "counts": self.counts.tolist(),
            "targets_real": self.targets_real.tolist(),
            "targets_int": self.targets_int.tolist(),
            "rates": self.rates.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingPlan":
        return cls(
            alpha=float(data["alpha"]),
            target_total=float(data["target_total"]),
            counts=np.asarray(data["counts"], dtype=np.int64),
            targets_real=np.asarray(data["targets_real"], dtype=np.float64),
            targets_int=np.asarray(data["targets_int"], dtype=np.int64),
            rates=np.asarray(data["rates"], dtype=np.float64),
        )


def compute_targets(counts, alpha: float, target_total: float) -> ScalingPlan:
    """Build the full plan: real targets, integer targets, sampling rates."""
    counts = as_counts(counts)
    alpha = check_alpha(alpha)
    target_total = float(target_total)
    if not np.isfinite(target_total) or target_total <= 0.0:
        raise ConfigError(f"target_total must be positive, got {target_total}")
    positive = counts > 0
    if not bool(positive.any()):
        raise ConfigError("at least one cluster must be non-empty")

    powered = np.zeros(counts.shape[0], dtype=np.float64)
    powered[positive] = np.power(counts[positive].astype(np.float64), alpha)
    targets_real = powered / powered.sum() * target_total

    budget = int(round(target_total))
    targets_int = largest_remainder(targets_real, budget)

    rates = np.zeros(counts.shape[0], dtype=np.float64)
    rates[positive] = targets_int[positive] / counts[positive]
    return ScalingPlan(
        alpha=alpha,
        target_total=target_total,
        counts=counts,
        targets_real=targets_real,
        targets_int=targets_int,
        rates=rates,
    )


def sampling_rate(plan: ScalingPlan, cluster: int) -> float:
    """Integer target over original size; values above 1 mean upsampling."""
    cluster = int(cluster)
    if not 0 <= cluster < plan.n_clusters:
        raise ConfigError(f"cluster index {cluster} out of range")
    count = int(plan.counts[cluster])
    target = int(plan.targets_int[cluster])
    if count == 0:
        if target > 0:
            raise IntegrityError(f"cluster {cluster} is empty but has target {target}")
        return 0.0
    return target / count


def describe_plan(plan: ScalingPlan, tail_threshold: int = 1000):
    """Distribution statistics over the integer targets."""
    from .analysis import distribution_report

    return distribution_report(plan.targets_int, tail_threshold=tail_threshold)


def save_plan(plan: ScalingPlan, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(plan.to_dict(), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write plan to {path}: {exc}") from exc


def load_plan(path) -> ScalingPlan:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read plan from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"malformed plan file {path}: {exc}") from exc
    return ScalingPlan.from_dict(data)
