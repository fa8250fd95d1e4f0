"""Core value types shared across the clustering pipeline.

Vectors are plain ``numpy.ndarray`` (float64) validated at construction
boundaries; higher-level records are frozen dataclasses. Cluster state is
only ever rewritten by the pool, which replaces whole instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

SECONDS_PER_DAY = 86400

MODEL_KINDS = ("rank", "accept", "merge")


class DimensionMismatchError(ValueError):
    """Raised when vector dimensions disagree where they must match."""


def dense_vec(values: Sequence[float] | np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    """Validate a dense vector: 1-D, float64, finite, optionally of length `dim`."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"dense vector must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(f"expected dim {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("dense vector contains non-finite entries")
    return v


def day_from_epoch(epoch_seconds: float) -> int:
    """Day-level timestamp: floor(epoch_seconds / 86400)."""
    return math.floor(epoch_seconds / SECONDS_PER_DAY)


def day_from_instant(instant: datetime) -> int:
    """Day number of a UTC instant. Naive datetimes are taken as UTC."""
    if instant.tzinfo is None:
        instant = instant.replace(tzinfo=timezone.utc)
    return day_from_epoch(instant.timestamp())


@dataclass(frozen=True)
class DocumentInput:
    """A raw article before embedding. `language` is metadata only."""

    id: str
    language: str
    timestamp: datetime
    title: Optional[str]
    paragraphs: tuple[str, ...]
    gold_label: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.paragraphs:
            raise ValueError(f"document {self.id!r} has no paragraphs")
        object.__setattr__(self, "paragraphs", tuple(self.paragraphs))

    @property
    def day(self) -> int:
        return day_from_instant(self.timestamp)


@dataclass(frozen=True)
class DocRepr:
    """Embedded document: three dense views plus a day-level timestamp.

    d1 = body+title, d2 = first paragraph, d3 = first paragraph+title.
    """

    id: str
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    ts: int
    gold_label: Optional[str] = None

    def __post_init__(self) -> None:
        d1 = dense_vec(self.d1)
        d2 = dense_vec(self.d2, dim=d1.shape[0])
        d3 = dense_vec(self.d3, dim=d1.shape[0])
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2", d2)
        object.__setattr__(self, "d3", d3)

    @property
    def dim(self) -> int:
        return int(self.d1.shape[0])


@dataclass(frozen=True)
class Cluster:
    """A story cluster: three running-mean centroids plus timestamp summary.

    Instances are immutable; the pool swaps in updated copies on insert/merge.
    ts_mean stays a float so merges recompute exactly.
    """

    id: int
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    ts_newest: int
    ts_oldest: int
    ts_mean: float
    members: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("cluster must have at least one member")
        if not (self.ts_oldest <= self.ts_mean <= self.ts_newest):
            raise ValueError(
                f"cluster {self.id}: ts_oldest {self.ts_oldest} <= ts_mean "
                f"{self.ts_mean} <= ts_newest {self.ts_newest} violated"
            )
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def dim(self) -> int:
        return int(self.c1.shape[0])


@dataclass(frozen=True)
class LinearModel:
    """Linear scorer: score = dot(weights, features) + bias."""

    weights: np.ndarray
    bias: float
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        w = dense_vec(self.weights)
        if self.kind == "rank" and self.bias != 0.0:
            raise ValueError("rank models must have bias 0 (ranking is bias-invariant)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def arity(self) -> int:
        return int(self.weights.shape[0])


def centroid_update(c: np.ndarray, n_before: int, x: np.ndarray) -> np.ndarray:
    """Incremental mean: fold `x` into a centroid of `n_before` vectors.

    Returns a new array; ignores `c` when n_before == 0.
    """
    if n_before < 0:
        raise ValueError("n_before must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if n_before == 0:
        return x.copy()
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape:
        raise DimensionMismatchError(f"centroid shape {c.shape} != vector shape {x.shape}")
    return c + (x - c) / (n_before + 1)


def cluster_from_doc(cid: int, d: DocRepr) -> Cluster:
    """Singleton cluster initialized with one document."""
    return Cluster(
        id=cid,
        c1=d.d1.copy(),
        c2=d.d2.copy(),
        c3=d.d3.copy(),
        ts_newest=d.ts,
        ts_oldest=d.ts,
        ts_mean=float(d.ts),
        members=(d.id,),
    )


def cluster_with_doc(c: Cluster, d: DocRepr) -> Cluster:
    """Cluster state after absorbing one more document."""
    n = c.size
    return Cluster(
        id=c.id,
        c1=centroid_update(c.c1, n, d.d1),
        c2=centroid_update(c.c2, n, d.d2),
        c3=centroid_update(c.c3, n, d.d3),
        ts_newest=max(c.ts_newest, d.ts),
        ts_oldest=min(c.ts_oldest, d.ts),
        ts_mean=c.ts_mean + (d.ts - c.ts_mean) / (n + 1),
        members=c.members + (d.id,),
    )


def merged_cluster(dst: Cluster, src: Cluster) -> Cluster:
    """Cluster state after `dst` absorbs all of `src` (size-weighted means)."""
    if dst.c1.shape != src.c1.shape:
        raise DimensionMismatchError("cannot merge clusters of different dim")
    n, m = dst.size, src.size
    total = n + m
    w_dst, w_src = n / total, m / total
    return Cluster(
        id=dst.id,
        c1=w_dst * dst.c1 + w_src * src.c1,
        c2=w_dst * dst.c2 + w_src * src.c2,
        c3=w_dst * dst.c3 + w_src * src.c3,
        ts_newest=max(dst.ts_newest, src.ts_newest),
        ts_oldest=min(dst.ts_oldest, src.ts_oldest),
        ts_mean=w_dst * dst.ts_mean + w_src * src.ts_mean,
        members=dst.members + src.members,
    )
