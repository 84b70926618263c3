"""Input validation helpers used at module boundaries.

Every public operation funnels its array arguments through these checks so
error messages stay uniform and the numeric contracts (dtypes, ranges,
normalization) are enforced in one place.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, IntegrityError

UNIT_NORM_ATOL = 1e-4


def as_rows(rows, dim: int | None = None) -> np.ndarray:
    """Coerce to a C-contiguous float32 (n, dim) matrix."""
    out = np.ascontiguousarray(rows, dtype=np.float32)
    if out.ndim != 2:
        raise ConfigError(f"embedding rows must be 2-dimensional, got shape {out.shape}")
    if dim is not None and out.shape[1] != dim:
        raise ConfigError(f"expected dim {dim}, got {out.shape[1]}")
    return out


def as_ids(ids, count: int | None = None) -> np.ndarray:
    """Coerce to uint64 sample ids and enforce unique ascending order."""
    out = np.ascontiguousarray(ids, dtype=np.uint64)
    if out.ndim != 1:
        raise ConfigError(f"ids must be 1-dimensional, got shape {out.shape}")
    if count is not None and out.shape[0] != count:
        raise IntegrityError(f"expected {count} ids, got {out.shape[0]}")
    if out.shape[0] > 1:
        diffs_ok = out[1:] > out[:-1]
        if not bool(diffs_ok.all()):
            bad = int(np.flatnonzero(~diffs_ok)[0])
            if out[bad + 1] == out[bad]:
                raise IntegrityError(f"duplicate sample id {int(out[bad])}")
            raise IntegrityError(
                f"ids must be sorted ascending (violation at position {bad + 1})"
            )
    return out


def check_unit_rows(rows: np.ndarray, what: str = "embeddings") -> None:
    """Require every row to sit on the unit sphere (within UNIT_NORM_ATOL)."""
    norms = np.linalg.norm(rows.astype(np.float64, copy=False), axis=1)
    if not bool(np.all(np.abs(norms - 1.0) <= UNIT_NORM_ATOL)):
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise ConfigError(
            f"{what} must be normalized to unit norm; row {worst} has norm {norms[worst]:.6g}"
        )


def as_counts(counts) -> np.ndarray:
    """Coerce a per-cluster size vector to non-negative int64."""
    out = np.ascontiguousarray(counts, dtype=np.int64)
    if out.ndim != 1:
        raise ConfigError(f"counts must be 1-dimensional, got shape {out.shape}")
    if out.size == 0:
        raise ConfigError("counts must be non-empty")
    if bool((out < 0).any()):
        raise ConfigError("counts must be non-negative")
    return out


def check_positive_int(value: int, name: str) -> int:
    value = int(value)
    if value <= 0:
        raise ConfigError(f"{name} must be a positive integer, got {value}")
    return value


def check_fraction(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise ConfigError(f"{name} must lie in (0, 1], got {value}")
    return value


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha):
        raise ConfigError(f"scaling exponent must be finite, got {alpha}")
    if alpha < 0.0:
        raise ConfigError(f"scaling exponent must be >= 0, got {alpha}")
    return alpha
