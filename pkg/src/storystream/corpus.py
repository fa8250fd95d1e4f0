"""Corpus ingestion and representation building.

Corpus files are JSON-lines with fields id, lang, date (ISO-8601), title
(nullable), paragraphs (array) or text (paragraphs separated by blank
lines), and cluster (gold label, nullable).

Embedding vectors come from a cache file or an HTTP sidecar; the cache is
keyed by the SHA-256 of each text unit, so identical units share one
stored vector.
"""
from __future__ import annotations

import base64
import hashlib
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Optional, Protocol, Sequence

import numpy as np
import requests

from .domain import DocRepr, DocumentInput, day_from_instant, dense_vec
from .evaluation import GoldStandard

CACHE_MAGIC = "storystream-embedding-cache"


class CorpusFormatError(ValueError):
    """Corpus file line failed to parse; message carries the line number."""


class EmbeddingCacheMissError(KeyError):
    """Cache-only embedding run hit text units with no cached vector."""


class EmbeddingServiceError(RuntimeError):
    """The embedding sidecar failed or returned a malformed response."""


def build_repr(
    title_vec: Optional[np.ndarray],
    fp_vec: np.ndarray,
    para_vecs: Sequence[np.ndarray],
    ts: int,
    doc_id: str,
    gold_label: Optional[str] = None,
) -> DocRepr:
    """Pool unit vectors into the three document views.

    d2 is the first-paragraph vector as-is; d3 averages it with the title
    (when present); d1 averages every paragraph plus the title, the title
    counting as one element. Titleless documents fall back to d3 = d2 and
    drop the title from d1.
    """
    fp_vec = dense_vec(fp_vec)
    dim = fp_vec.shape[0]
    if not para_vecs:
        raise ValueError(f"document {doc_id!r}: para_vecs must be nonempty")
    paras = [dense_vec(v, dim=dim) for v in para_vecs]
    if title_vec is not None:
        title = dense_vec(title_vec, dim=dim)
        d1 = np.mean(paras + [title], axis=0)
        d3 = (fp_vec + title) / 2.0
    else:
        d1 = np.mean(paras, axis=0)
        d3 = fp_vec.copy()
    return DocRepr(id=doc_id, d1=d1, d2=fp_vec.copy(), d3=d3, ts=ts, gold_label=gold_label)


def _parse_timestamp(raw: str) -> datetime:
    # fromisoformat rejects the Z suffix before Python 3.11
    dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def _split_paragraphs(text: str) -> list[str]:
    paras = [p.strip() for p in text.split("\n\n")]
    return [p for p in paras if p]


def load_corpus(path: str | Path) -> list[DocumentInput]:
    """Parse a corpus JSONL file, sorted by timestamp ascending (stable by id)."""
    docs: list[DocumentInput] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                doc_id = rec["id"]
                if doc_id in seen:
                    raise ValueError(f"duplicate document id {doc_id!r}")
                seen.add(doc_id)
                if "paragraphs" in rec:
                    paragraphs = tuple(rec["paragraphs"])
                else:
                    paragraphs = tuple(_split_paragraphs(rec["text"]))
                docs.append(
                    DocumentInput(
                        id=doc_id,
                        language=rec.get("lang", ""),
                        timestamp=_parse_timestamp(rec["date"]),
                        title=rec.get("title"),
                        paragraphs=paragraphs,
                        gold_label=rec.get("cluster"),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path} line {lineno}: {exc}") from exc
    docs.sort(key=lambda d: (d.timestamp, d.id))
    return docs


def save_corpus(docs: Sequence[DocumentInput], fp: IO[str]) -> None:
    for d in docs:
        rec = {
            "id": d.id,
            "lang": d.language,
            "date": d.timestamp.astimezone(timezone.utc).isoformat(),
            "title": d.title,
            "paragraphs": list(d.paragraphs),
            "cluster": d.gold_label,
        }
        fp.write(json.dumps(rec, sort_keys=True) + "\n")


def save_gold(docs: Sequence[DocumentInput], fp: IO[str]) -> None:
    """Labels JSONL for evaluation: id, label, lang per gold-labeled document."""
    for d in docs:
        if d.gold_label is None:
            continue
        fp.write(
            json.dumps({"id": d.id, "label": d.gold_label, "lang": d.language}) + "\n"
        )


def save_connections(connections: frozenset[frozenset[str]], fp: IO[str]) -> None:
    for pair in sorted(tuple(sorted(p)) for p in connections):
        fp.write(f"{pair[0]}\t{pair[1]}\n")


def text_unit_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Content-addressed vector store backed by a JSONL file.

    The first line is a header with dim and encoder identifier; records
    hold base64-encoded little-endian float64 vectors. Runs refuse to mix
    encoder identifiers.
    """

    def __init__(self, path: str | Path, dim: Optional[int] = None, model: Optional[str] = None):
        self.path = Path(path)
        self.dim = dim
        self.model = model
        self._vectors: dict[str, np.ndarray] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fp:
            header_line = fp.readline().strip()
            try:
                header = json.loads(header_line)
                if header.get("format") != CACHE_MAGIC:
                    raise ValueError(f"not a {CACHE_MAGIC} file")
                file_dim = int(header["dim"])
                file_model = str(header["model"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{self.path}: bad cache header: {exc}") from exc
            if self.model is not None and file_model != self.model:
                raise ValueError(
                    f"cache {self.path} was built with encoder {file_model!r}, "
                    f"refusing to mix with {self.model!r}"
                )
            if self.dim is not None and file_dim != self.dim:
                raise ValueError(
                    f"cache {self.path} has dim {file_dim}, expected {self.dim}"
                )
            self.dim, self.model = file_dim, file_model
            for lineno, line in enumerate(fp, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    vec = np.frombuffer(
                        base64.b64decode(rec["vector"]), dtype="<f8"
                    ).astype(np.float64)
                    if vec.shape[0] != self.dim:
                        raise ValueError(f"vector has dim {vec.shape[0]}")
                    self._vectors[rec["sha256"]] = vec
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise CorpusFormatError(f"{self.path} line {lineno}: {exc}") from exc

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, text: str) -> bool:
        return text_unit_key(text) in self._vectors

    def get(self, text: str) -> Optional[np.ndarray]:
        return self._vectors.get(text_unit_key(text))

    def _ensure_header(self) -> None:
        if self.dim is None or self.model is None:
            raise ValueError("cache header unknown; set dim and model before writing")
        if not self.path.exists():
            header = {"format": CACHE_MAGIC, "dim": self.dim, "model": self.model}
            self.path.write_text(json.dumps(header) + "\n", encoding="utf-8")

    def put_many(self, texts: Sequence[str], vectors: Sequence[np.ndarray]) -> None:
        """Write-through append of new (text, vector) pairs; dedups by content."""
        self._ensure_header()
        with open(self.path, "a", encoding="utf-8") as fp:
            for text, vec in zip(texts, vectors):
                key = text_unit_key(text)
                if key in self._vectors:
                    continue
                vec = dense_vec(vec, dim=self.dim)
                self._vectors[key] = vec
                payload = base64.b64encode(vec.astype("<f8").tobytes()).decode("ascii")
                fp.write(json.dumps({"sha256": key, "vector": payload}) + "\n")


class EmbeddingProvider(Protocol):
    def encode(self, texts: Sequence[str]) -> tuple[list[np.ndarray], int, str]:
        """Return (vectors, dim, model_name) for a batch of texts."""


class ServiceClient:
    """HTTP client for the embedding sidecar (POST /embed)."""

    def __init__(
        self,
        url: str,
        batch_size: int = 32,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
    ):
        self.url = url.rstrip("/")
        self.batch_size = batch_size
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._session = requests.Session()

    def encode(self, texts: Sequence[str]) -> tuple[list[np.ndarray], int, str]:
        vectors: list[np.ndarray] = []
        dim, model = None, None
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            body = self._post_with_retry(batch)
            try:
                dim = int(body["dim"])
                model = str(body["model"])
                got = [np.asarray(v, dtype=np.float64) for v in body["vectors"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise EmbeddingServiceError(f"malformed /embed response: {exc}") from exc
            if len(got) != len(batch):
                raise EmbeddingServiceError(
                    f"asked for {len(batch)} vectors, got {len(got)}"
                )
            vectors.extend(got)
        if dim is None or model is None:
            raise EmbeddingServiceError("empty batch submitted to encode()")
        return vectors, dim, model

    def _post_with_retry(self, batch: list[str]) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    f"{self.url}/embed", json={"texts": batch}, timeout=self.timeout
                )
                if resp.status_code != 200:
                    raise EmbeddingServiceError(
                        f"/embed returned {resp.status_code}: {resp.text[:200]}"
                    )
                return resp.json()
            except (requests.RequestException, ValueError, EmbeddingServiceError) as exc:
                last_error = exc
        raise EmbeddingServiceError(
            f"embedding service unreachable after {self.max_attempts} attempts: {last_error}"
        )


def _doc_units(doc: DocumentInput) -> list[str]:
    units = list(doc.paragraphs)
    if doc.title is not None:
        units.append(doc.title)
    return units


def embed_corpus(
    docs: Sequence[DocumentInput],
    cache: EmbeddingCache,
    provider: Optional[EmbeddingProvider] = None,
) -> list[DocRepr]:
    """Resolve every document's unit vectors and pool them into DocReprs.

    Cache-only mode (provider=None) fails listing the documents whose units
    are missing; with a provider, misses are fetched and written through.
    """
    missing_texts: dict[str, None] = {}
    missing_docs: list[str] = []
    for doc in docs:
        miss = [u for u in _doc_units(doc) if u not in cache]
        if miss:
            missing_docs.append(doc.id)
            for u in miss:
                missing_texts.setdefault(u)

    if missing_texts:
        if provider is None:
            raise EmbeddingCacheMissError(
                f"{len(missing_texts)} text units missing from cache for "
                f"{len(missing_docs)} documents: {missing_docs[:10]}"
            )
        texts = list(missing_texts)
        vectors, dim, model = provider.encode(texts)
        if cache.model is not None and cache.model != model:
            raise ValueError(
                f"cache encoder {cache.model!r} != service encoder {model!r}"
            )
        if cache.dim is None:
            cache.dim, cache.model = dim, model
        cache.put_many(texts, vectors)

    reprs = []
    for doc in docs:
        para_vecs = [cache.get(p) for p in doc.paragraphs]
        title_vec = cache.get(doc.title) if doc.title is not None else None
        reprs.append(
            build_repr(
                title_vec=title_vec,
                fp_vec=para_vecs[0],
                para_vecs=para_vecs,
                ts=day_from_instant(doc.timestamp),
                doc_id=doc.id,
                gold_label=doc.gold_label,
            )
        )
    return reprs


def gold_from_docs(
    docs: Sequence[DocumentInput],
    connections: frozenset[frozenset[str]] = frozenset(),
) -> GoldStandard:
    labels = {d.id: d.gold_label for d in docs if d.gold_label is not None}
    if len(labels) != len(docs):
        unlabeled = [d.id for d in docs if d.gold_label is None]
        raise ValueError(f"{len(unlabeled)} documents lack gold labels: {unlabeled[:5]}")
    return GoldStandard(labels=labels, connections=connections)
