"""The cluster pool: owns live clusters and serializes all mutations.

Single-writer contract: one stream thread calls the mutating methods;
ranking scans read the snapshot returned by live_clusters() between
mutations. Every mutation swaps in a fresh immutable Cluster, so an
already-taken snapshot never changes underneath a reader.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Optional

from .domain import (
    Cluster,
    DocRepr,
    cluster_from_doc,
    cluster_with_doc,
    merged_cluster,
)


class UnknownClusterError(KeyError):
    """Cluster id is not live (never existed, archived, or retired by a merge)."""


@dataclass(frozen=True)
class PoolConfig:
    """archive_horizon_days=None disables archiving; keep_docs retains DocReprs
    for training-time recomputation oracles (lean runs drop them)."""

    archive_horizon_days: Optional[int] = None
    keep_docs: bool = True

    def __post_init__(self) -> None:
        if self.archive_horizon_days is not None and self.archive_horizon_days <= 0:
            raise ValueError("archive_horizon_days must be > 0 when set")


class ClusterPool:
    def __init__(self, config: PoolConfig = PoolConfig()):
        self.config = config
        self._live: dict[int, Cluster] = {}
        self._archived: dict[int, Cluster] = {}
        self._next_id = 0
        self._docs: dict[str, DocRepr] = {}
        self._merge_log: list[tuple[int, int]] = []  # (retired src, surviving dst)
        self._n_documents = 0

    # -- mutations (single writer) -------------------------------------------

    def create_cluster(self, d: DocRepr) -> int:
        cid = self._next_id
        self._next_id += 1
        self._live[cid] = cluster_from_doc(cid, d)
        self._remember(d)
        return cid

    def insert(self, cid: int, d: DocRepr) -> None:
        cluster = self._require_live(cid)
        self._live[cid] = cluster_with_doc(cluster, d)
        self._remember(d)

    def merge(self, dst: int, src: int) -> None:
        """Absorb cluster `src` into `dst`; `src` is retired, never reused."""
        if dst == src:
            raise ValueError(f"cannot merge cluster {dst} into itself")
        dst_cluster = self._require_live(dst)
        src_cluster = self._require_live(src)
        self._live[dst] = merged_cluster(dst_cluster, src_cluster)
        del self._live[src]
        self._merge_log.append((src, dst))

    def archive_sweep(self, stream_clock: int) -> int:
        """Archive live clusters whose newest document is older than the horizon."""
        horizon = self.config.archive_horizon_days
        if horizon is None:
            return 0
        stale = [
            cid for cid, c in self._live.items() if c.ts_newest < stream_clock - horizon
        ]
        for cid in stale:
            self._archived[cid] = self._live.pop(cid)
        return len(stale)

    # -- reads ----------------------------------------------------------------

    def live_clusters(self) -> tuple[Cluster, ...]:
        return tuple(self._live[cid] for cid in sorted(self._live))

    def archived_clusters(self) -> tuple[Cluster, ...]:
        return tuple(self._archived[cid] for cid in sorted(self._archived))

    def all_clusters(self) -> tuple[Cluster, ...]:
        merged = {**self._live, **self._archived}
        return tuple(merged[cid] for cid in sorted(merged))

    def get(self, cid: int) -> Cluster:
        return self._require_live(cid)

    def is_live(self, cid: int) -> bool:
        return cid in self._live

    @property
    def merge_log(self) -> tuple[tuple[int, int], ...]:
        return tuple(self._merge_log)

    @property
    def n_documents(self) -> int:
        return self._n_documents

    def doc(self, doc_id: str) -> DocRepr:
        if doc_id not in self._docs:
            raise KeyError(
                f"document {doc_id!r} not retained (unknown id or lean pool)"
            )
        return self._docs[doc_id]

    def assignments(self) -> dict[str, int]:
        """doc_id -> cluster id over live plus archived clusters."""
        out: dict[str, int] = {}
        for c in self.all_clusters():
            for doc_id in c.members:
                out[doc_id] = c.id
        return out

    # -- export ----------------------------------------------------------------

    def export_records(self, include_centroids: bool = False) -> Iterable[dict]:
        for c in self.all_clusters():
            rec = {
                "id": c.id,
                "size": c.size,
                "members": list(c.members),
                "ts_newest": c.ts_newest,
                "ts_oldest": c.ts_oldest,
                "ts_mean": c.ts_mean,
                "archived": c.id in self._archived,
            }
            if include_centroids:
                rec["centroids"] = {
                    "c1": c.c1.tolist(),
                    "c2": c.c2.tolist(),
                    "c3": c.c3.tolist(),
                }
            yield rec

    def export_jsonl(self, fp: IO[str], include_centroids: bool = False) -> None:
        for rec in self.export_records(include_centroids):
            fp.write(json.dumps(rec, sort_keys=True) + "\n")

    # -- internals ---------------------------------------------------------------

    def _require_live(self, cid: int) -> Cluster:
        try:
            return self._live[cid]
        except KeyError:
            raise UnknownClusterError(
                f"cluster {cid} is not live (unknown, archived, or merged away)"
            ) from None

    def _remember(self, d: DocRepr) -> None:
        self._n_documents += 1
        if self.config.keep_docs:
            self._docs[d.id] = d
