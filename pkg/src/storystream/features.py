"""Similarity features for document-cluster and cluster-cluster comparisons.

Canonical 8-feature layout (document d vs cluster c):

    f1 = cos(d1, c1)   f2 = cos(d2, c2)   f3 = cos(d3, c3)
    f4 = cos(d2, c1)   f5 = cos(d3, c1)
    f6 = gauss(d.ts, c.ts_newest)   f7 = gauss(d.ts, c.ts_oldest)
    f8 = gauss(d.ts, c.ts_mean)

The 11-feature merge layout appends the acceptance score on f1..f8 and a
size score for each cluster of the pair. The reduced 4-feature variant
keeps {f1, f6, f7, f8}.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import Cluster, DimensionMismatchError, DocRepr, LinearModel

DEFAULT_MU = 0.0
DEFAULT_SIGMA = 3.0
DEFAULT_SIZE_LIMITS = (1, 2, 3, 5, 10, 20, 50)

RANK_ARITY = 8
MERGE_ARITY = 11

# Indices of the reduced feature set: first-view cosine plus the three
# temporal scores.
FEATURES_4_INDICES = (0, 5, 6, 7)
FEATURES_8_INDICES = tuple(range(8))


class DegenerateVectorWarning(UserWarning):
    """A zero-norm vector reached cosine(); the score defaults to 0."""


@dataclass(frozen=True)
class TemporalParams:
    """Gaussian timestamp-similarity hyper-parameters, in days."""

    mu: float = DEFAULT_MU
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


@dataclass(frozen=True)
class SizeLimits:
    """Strictly increasing positive size thresholds for the staircase score."""

    limits: tuple[int, ...] = DEFAULT_SIZE_LIMITS

    def __post_init__(self) -> None:
        limits = tuple(int(x) for x in self.limits)
        if not limits:
            raise ValueError("size limits must be nonempty")
        if limits[0] <= 0 or any(b <= a for a, b in zip(limits, limits[1:])):
            raise ValueError("size limits must be positive and strictly increasing")
        object.__setattr__(self, "limits", limits)

    def __len__(self) -> int:
        return len(self.limits)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity clamped to [-1, 1]; zero-norm inputs score 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cosine: shapes {a.shape} and {b.shape} differ")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine() received a zero-norm vector", DegenerateVectorWarning)
        return 0.0
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))


def temporal_score(d_ts: float, c_ts: float, p: TemporalParams) -> float:
    """Gaussian similarity of two day-level timestamps: exp(-(|dt|-mu)^2 / 2s^2)."""
    z = abs(d_ts - c_ts) - p.mu
    return math.exp(-(z * z) / (2.0 * p.sigma * p.sigma))


def size_score(k: int, v: SizeLimits) -> float:
    """Fraction of size limits strictly exceeded by a cluster of k documents."""
    if k < 0:
        raise ValueError("cluster size must be >= 0")
    return sum(1 for limit in v.limits if k > limit) / len(v)


def _features_8(
    d1: np.ndarray,
    d2: np.ndarray,
    d3: np.ndarray,
    ts: float,
    c: Cluster,
    p: TemporalParams,
) -> np.ndarray:
    return np.array(
        [
            cosine(d1, c.c1),
            cosine(d2, c.c2),
            cosine(d3, c.c3),
            cosine(d2, c.c1),
            cosine(d3, c.c1),
            temporal_score(ts, c.ts_newest, p),
            temporal_score(ts, c.ts_oldest, p),
            temporal_score(ts, c.ts_mean, p),
        ],
        dtype=np.float64,
    )


def doc_cluster_features(d: DocRepr, c: Cluster, p: TemporalParams) -> np.ndarray:
    """The canonical 8-feature vector for document d against cluster c."""
    if d.dim != c.dim:
        raise DimensionMismatchError(f"doc dim {d.dim} != cluster dim {c.dim}")
    return _features_8(d.d1, d.d2, d.d3, float(d.ts), c, p)


def batch_doc_cluster_features(
    d: DocRepr, clusters: Sequence[Cluster], p: TemporalParams
) -> np.ndarray:
    """8-feature rows for d against every cluster, as one (n, 8) matrix.

    Matches doc_cluster_features componentwise; vectorized for ranking scans.
    """
    n = len(clusters)
    if n == 0:
        return np.zeros((0, 8), dtype=np.float64)
    dim = d.dim
    mats = []
    for attr in ("c1", "c2", "c3"):
        m = np.stack([getattr(c, attr) for c in clusters])
        if m.shape[1] != dim:
            raise DimensionMismatchError(f"doc dim {dim} != cluster dim {m.shape[1]}")
        mats.append(m)
    m1, m2, m3 = mats

    def _cos(vec: np.ndarray, mat: np.ndarray) -> np.ndarray:
        nv = np.linalg.norm(vec)
        nm = np.linalg.norm(mat, axis=1)
        zero = (nm == 0.0) | (nv == 0.0)
        if np.any(zero):
            warnings.warn("cosine() received a zero-norm vector", DegenerateVectorWarning)
        denom = np.where(zero, 1.0, nv * nm)
        return np.where(zero, 0.0, np.clip(mat @ vec / denom, -1.0, 1.0))

    def _gauss(ts_values: np.ndarray) -> np.ndarray:
        z = np.abs(float(d.ts) - ts_values) - p.mu
        return np.exp(-(z * z) / (2.0 * p.sigma * p.sigma))

    out = np.empty((n, 8), dtype=np.float64)
    out[:, 0] = _cos(d.d1, m1)
    out[:, 1] = _cos(d.d2, m2)
    out[:, 2] = _cos(d.d3, m3)
    out[:, 3] = _cos(d.d2, m1)
    out[:, 4] = _cos(d.d3, m1)
    out[:, 5] = _gauss(np.array([c.ts_newest for c in clusters], dtype=np.float64))
    out[:, 6] = _gauss(np.array([c.ts_oldest for c in clusters], dtype=np.float64))
    out[:, 7] = _gauss(np.array([c.ts_mean for c in clusters], dtype=np.float64))
    return out


def cluster_pair_base_features(src: Cluster, cand: Cluster, p: TemporalParams) -> np.ndarray:
    """f1..f8 with `src` standing in as a pseudo-document (centroids, ts_mean)."""
    if src.dim != cand.dim:
        raise DimensionMismatchError(f"cluster dims differ: {src.dim} != {cand.dim}")
    return _features_8(src.c1, src.c2, src.c3, src.ts_mean, cand, p)


def cluster_pair_features(
    src: Cluster,
    cand: Cluster,
    p: TemporalParams,
    v: SizeLimits,
    accept_model: LinearModel,
    indices: tuple[int, ...] = FEATURES_8_INDICES,
) -> np.ndarray:
    """Merge-decision feature vector for the pair (src, cand).

    Layout: the (possibly reduced) pair base features, then the acceptance
    score over those features, then size scores for src and cand.
    """
    if accept_model.kind != "accept":
        raise ValueError(f"expected an accept model, got kind {accept_model.kind!r}")
    base = cluster_pair_base_features(src, cand, p)[list(indices)]
    if accept_model.arity != base.shape[0]:
        raise DimensionMismatchError(
            f"accept model arity {accept_model.arity} != base feature count {base.shape[0]}"
        )
    accept_score = float(np.dot(accept_model.weights, base)) + accept_model.bias
    return np.concatenate(
        [base, [accept_score, size_score(src.size, v), size_score(cand.size, v)]]
    )
