"""Deterministic synthetic corpora for desk-scale verification.

Each story gets a unit-norm center; documents sample their text-unit
vectors as center + Gaussian noise, with the noise magnitude solved from
the requested inter-story cosine margin. Optional "languages" place their
documents in disjoint noise regimes around the shared story centers, and
optional time-split stories emit two temporal phases separated by a gap.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EmbeddingCache, save_connections, save_corpus, save_gold
from .domain import SECONDS_PER_DAY, DocumentInput
from .evaluation import GoldStandard

SYNTH_ENCODER_NAME = "synthetic-gaussian-v1"

# Spread of a noisy doc's cross-story cosine, in standard deviations, used
# when solving the noise magnitude for a requested margin.
_CROSS_STORY_SIGMAS = 4.0


@dataclass(frozen=True)
class SynthCorpus:
    docs: tuple[DocumentInput, ...]
    gold: GoldStandard
    unit_texts: tuple[str, ...]
    unit_vectors: np.ndarray
    dim: int
    encoder: str = SYNTH_ENCODER_NAME

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Write corpus.jsonl, gold.jsonl, connections.tsv, cache.jsonl."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.jsonl",
            "gold": out / "gold.jsonl",
            "connections": out / "connections.tsv",
            "cache": out / "cache.jsonl",
        }
        with open(paths["corpus"], "w", encoding="utf-8") as fp:
            save_corpus(self.docs, fp)
        with open(paths["gold"], "w", encoding="utf-8") as fp:
            save_gold(self.docs, fp)
        with open(paths["connections"], "w", encoding="utf-8") as fp:
            save_connections(self.gold.connections, fp)
        if paths["cache"].exists():
            paths["cache"].unlink()
        cache = EmbeddingCache(paths["cache"], dim=self.dim, model=self.encoder)
        cache.put_many(list(self.unit_texts), list(self.unit_vectors))
        return paths


def noise_scale_for_margin(sep: float, dim: int) -> float:
    """Largest noise magnitude keeping the expected own-vs-other cosine margin >= sep.

    Own-center cosine of center + noise(|noise| = x) is about 1/sqrt(1+x^2);
    cross-story cosines concentrate around 0 with spread x/sqrt(dim(1+x^2)).
    Bisect the margin expression in x.
    """
    if not 0.0 < sep < 1.0:
        raise ValueError("sep must be in (0, 1)")

    def margin(x: float) -> float:
        return (1.0 - _CROSS_STORY_SIGMAS * x / np.sqrt(dim)) / np.sqrt(1.0 + x * x)

    lo, hi = 0.0, 4.0
    if margin(hi) > sep:
        return hi
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if margin(mid) >= sep:
            lo = mid
        else:
            hi = mid
    return lo


def _story_centers(n_stories: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((dim, max(n_stories, 1)))
    if n_stories <= dim:
        q, _ = np.linalg.qr(raw)
        return q[:, :n_stories].T.copy()
    centers = rng.standard_normal((n_stories, dim))
    return centers / np.linalg.norm(centers, axis=1, keepdims=True)


def synth_corpus(
    n_stories: int,
    docs_per_story: int,
    dim: int = 512,
    sep: float = 0.5,
    time_spread_days: float = 30.0,
    seed: int = 0,
    languages: Sequence[str] = ("xx",),
    per_language_labels: bool = False,
    time_split_stories: int = 0,
    split_gap_days: float = 45.0,
    within_story_days: float = 1.5,
) -> SynthCorpus:
    """Generate a deterministic synthetic corpus with gold labels.

    per_language_labels emits one gold label per (story, language) plus
    positive connections across languages, mimicking how crosslingual
    stories are annotated. time_split_stories > 0 pushes the second half
    of that many stories `split_gap_days` into the future.
    """
    if n_stories < 1 or docs_per_story < 1:
        raise ValueError("need at least one story and one document per story")
    if time_split_stories > n_stories:
        raise ValueError("time_split_stories cannot exceed n_stories")
    languages = tuple(languages) or ("xx",)

    rng = np.random.default_rng(seed)
    centers = _story_centers(n_stories, dim, rng)

    total_noise = noise_scale_for_margin(sep, dim)
    if len(languages) > 1:
        lang_scale = 0.5 * total_noise
        doc_scale = float(np.sqrt(total_noise**2 - lang_scale**2))
    else:
        lang_scale, doc_scale = 0.0, total_noise
    jitter_scale = 0.1 * total_noise

    lang_offsets = {}
    for s in range(n_stories):
        for lang in languages:
            direction = rng.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            lang_offsets[(s, lang)] = lang_scale * direction

    story_days = rng.uniform(0.0, time_spread_days, size=n_stories)

    docs: list[DocumentInput] = []
    texts: list[str] = []
    vectors: list[np.ndarray] = []
    labels: dict[str, str] = {}

    def make_unit(text: str, base: np.ndarray) -> None:
        unit = base + jitter_scale * rng.standard_normal(dim) / np.sqrt(dim)
        unit /= np.linalg.norm(unit)
        texts.append(text)
        vectors.append(unit)

    doc_index = 0
    for s in range(n_stories):
        story_label = f"story-{s:03d}"
        for i in range(docs_per_story):
            lang = languages[doc_index % len(languages)]
            doc_id = f"doc-{doc_index:05d}"
            # one noise draw per document; units add small independent jitter
            base = (
                centers[s]
                + lang_offsets[(s, lang)]
                + doc_scale * rng.standard_normal(dim) / np.sqrt(dim)
            )
            day = story_days[s] + rng.normal(0.0, within_story_days)
            if time_split_stories > s and i >= docs_per_story // 2:
                day += split_gap_days
            day = max(day, 0.0)
            epoch = int(day * SECONDS_PER_DAY)
            n_paras = int(rng.integers(1, 4))
            title = f"story {s} {lang} headline {i}"
            paragraphs = tuple(
                f"story {s} {lang} doc {i} paragraph {k}" for k in range(n_paras)
            )
            make_unit(title, base)
            for k, para in enumerate(paragraphs):
                make_unit(para, base)
            label = f"{story_label}@{lang}" if per_language_labels else story_label
            labels[doc_id] = label
            docs.append(
                DocumentInput(
                    id=doc_id,
                    language=lang,
                    timestamp=datetime.fromtimestamp(epoch, tz=timezone.utc),
                    title=title,
                    paragraphs=paragraphs,
                    gold_label=label,
                )
            )
            doc_index += 1

    connections: set[frozenset[str]] = set()
    if per_language_labels:
        present: dict[str, set[str]] = {}
        for doc in docs:
            story = doc.gold_label.rsplit("@", 1)[0]
            present.setdefault(story, set()).add(doc.gold_label)
        for story_labels in present.values():
            ordered = sorted(story_labels)
            for i, a in enumerate(ordered):
                for b in ordered[i + 1:]:
                    connections.add(frozenset((a, b)))

    docs.sort(key=lambda d: (d.timestamp, d.id))
    return SynthCorpus(
        docs=tuple(docs),
        gold=GoldStandard(labels=labels, connections=frozenset(connections)),
        unit_texts=tuple(texts),
        unit_vectors=np.stack(vectors),
        dim=dim,
    )
