"""The online clustering loop: rank all clusters, accept or create, merge.

Per document: score every live cluster with the ranking model (argmax,
ties to the lowest cluster id), let the acceptance model decide between
joining the best cluster and creating a new one, then give the receiving
cluster a chance to absorb similar clusters via the merge model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from .domain import Cluster, DocRepr, LinearModel
from .features import (
    FEATURES_4_INDICES,
    FEATURES_8_INDICES,
    SizeLimits,
    TemporalParams,
    batch_doc_cluster_features,
    cluster_pair_base_features,
    cluster_pair_features,
)
from .models import score
from .pool import ClusterPool, PoolConfig


@dataclass(frozen=True)
class EngineConfig:
    temporal: TemporalParams = TemporalParams()
    size_limits: SizeLimits = SizeLimits()
    n_features: int = 8
    merge_enabled: bool = True
    merge_top_m: int = 5
    merge_eval_all: bool = False
    pool: PoolConfig = PoolConfig()

    def __post_init__(self) -> None:
        if self.n_features not in (4, 8):
            raise ValueError("n_features must be 4 or 8")
        if self.merge_top_m < 1:
            raise ValueError("merge_top_m must be >= 1")

    @property
    def feature_indices(self) -> tuple[int, ...]:
        return FEATURES_4_INDICES if self.n_features == 4 else FEATURES_8_INDICES


@dataclass(frozen=True)
class AssignmentRecord:
    doc_id: str
    cluster_id: int
    rank_score: Optional[float]
    accept_score: Optional[float]
    created: bool
    merges: tuple[tuple[int, int], ...] = ()  # (retired id, into id)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "cluster_id": self.cluster_id,
            "rank_score": self.rank_score,
            "accept_score": self.accept_score,
            "created": self.created,
            "merges": [list(m) for m in self.merges],
        }


class ClusteringEngine:
    """Drives the pool with trained rank/accept (and optionally merge) models."""

    def __init__(
        self,
        rank_model: LinearModel,
        accept_model: LinearModel,
        merge_model: Optional[LinearModel] = None,
        config: EngineConfig = EngineConfig(),
    ):
        if rank_model.kind != "rank" or accept_model.kind != "accept":
            raise ValueError(
                f"expected rank+accept models, got {rank_model.kind!r}, {accept_model.kind!r}"
            )
        n = config.n_features
        if rank_model.arity != n or accept_model.arity != n:
            raise ValueError(
                f"model arity mismatch: engine uses {n} features, rank model has "
                f"{rank_model.arity}, accept model has {accept_model.arity}"
            )
        if config.merge_enabled:
            if merge_model is None:
                raise ValueError("merge step enabled but no merge model configured")
            if merge_model.kind != "merge":
                raise ValueError(f"expected a merge model, got {merge_model.kind!r}")
            if merge_model.arity != n + 3:
                raise ValueError(
                    f"merge model arity {merge_model.arity} != {n + 3} "
                    f"(pair features + accept score + two size scores)"
                )
        self.rank_model = rank_model
        self.accept_model = accept_model
        self.merge_model = merge_model
        self.config = config
        self.pool = ClusterPool(config.pool)

    def process_document(self, d: DocRepr) -> AssignmentRecord:
        cfg = self.config
        snapshot = self.pool.live_clusters()
        rank_score: Optional[float] = None
        accept_score: Optional[float] = None
        created = False

        if not snapshot:
            cid = self.pool.create_cluster(d)
            created = True
        else:
            feats = batch_doc_cluster_features(d, snapshot, cfg.temporal)
            feats = feats[:, cfg.feature_indices]
            scores = feats @ self.rank_model.weights
            # argmax takes the first maximum, i.e. the lowest cluster id on ties
            best = int(np.argmax(scores))
            rank_score = float(scores[best])
            accept_score = float(
                np.dot(self.accept_model.weights, feats[best]) + self.accept_model.bias
            )
            if accept_score > 0.0:
                cid = snapshot[best].id
                self.pool.insert(cid, d)
            else:
                cid = self.pool.create_cluster(d)
                created = True

        merges: tuple[tuple[int, int], ...] = ()
        if cfg.merge_enabled:
            merges = self._merge_step(cid)
        if cfg.pool.archive_horizon_days is not None:
            self.pool.archive_sweep(d.ts)
        return AssignmentRecord(
            doc_id=d.id,
            cluster_id=cid,
            rank_score=rank_score,
            accept_score=accept_score,
            created=created,
            merges=merges,
        )

    def pair_vector(self, src: Cluster, cand: Cluster) -> np.ndarray:
        cfg = self.config
        return cluster_pair_features(
            src, cand, cfg.temporal, cfg.size_limits, self.accept_model,
            indices=cfg.feature_indices,
        )

    def merge_candidates(self, src: Cluster, others: Sequence[Cluster]) -> list[Cluster]:
        """Rank-order `others` against `src`; keep all or the top-m per config."""
        cfg = self.config
        scored = []
        for cand in others:
            base = cluster_pair_base_features(src, cand, cfg.temporal)[
                list(cfg.feature_indices)
            ]
            scored.append((-float(np.dot(self.rank_model.weights, base)), cand.id, cand))
        scored.sort(key=lambda t: (t[0], t[1]))
        if not cfg.merge_eval_all:
            scored = scored[: cfg.merge_top_m]
        return [cand for _, _, cand in scored]

    def _merge_step(self, cid: int) -> tuple[tuple[int, int], ...]:
        """Absorb positive-scoring candidates one at a time, best first.

        Features are recomputed after every merge because each absorption
        moves the receiving cluster's centroids.
        """
        assert self.merge_model is not None
        merges: list[tuple[int, int]] = []
        while True:
            src = self.pool.get(cid)
            others = [c for c in self.pool.live_clusters() if c.id != cid]
            if not others:
                break
            best: Optional[tuple[float, int]] = None  # (-score, id): max score, ties low id
            for cand in self.merge_candidates(src, others):
                merge_score = score(self.merge_model, self.pair_vector(src, cand))
                if merge_score <= 0.0:
                    continue
                key = (-merge_score, cand.id)
                if best is None or key < best:
                    best = key
            if best is None:
                break
            self.pool.merge(cid, best[1])
            merges.append((best[1], cid))
        return tuple(merges)

    def run_stream(self, corpus: Iterable[DocRepr]) -> list[AssignmentRecord]:
        return [self.process_document(d) for d in corpus]


def write_assignments(records: Sequence[AssignmentRecord], fp: IO[str]) -> None:
    for rec in records:
        fp.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
