"""Training-set generation and model fitting orchestration.

Rank and accept examples come from a teacher-forced replay: every document
is placed into its gold cluster after its examples are emitted, so later
steps observe correct cluster states. Merge examples come from running the
real engine loop (no teacher forcing) and labeling sampled cluster pairs
by whether merging them improves the local pairwise F1 under gold labels.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Callable, Optional, Sequence

import numpy as np

from .domain import DocRepr, LinearModel
from .engine import ClusteringEngine, EngineConfig
from .features import (
    FEATURES_4_INDICES,
    FEATURES_8_INDICES,
    SizeLimits,
    TemporalParams,
    batch_doc_cluster_features,
)
from .models import (
    LabeledExample,
    RankPair,
    TrainConfig,
    binary_hinge_loss,
    constant_model,
    rank_hinge_loss,
    save_model,
    train_binary,
    train_rank,
)
from .pool import ClusterPool, PoolConfig

DEFAULT_K_NEG = 20
DEFAULT_MERGE_TOP_M = 5


@dataclass(frozen=True)
class MergeSample:
    """A labeled cluster pair from the merge simulation.

    y is +1 exactly when merging scored a higher local pairwise F1 than
    keeping the clusters separate.
    """

    f: np.ndarray
    y: int
    src_id: int
    cand_id: int
    f1_merged: float
    f1_separate: float

    def __post_init__(self) -> None:
        if self.y not in (+1, -1):
            raise ValueError("label must be +1 or -1")
        if (self.y == +1) != (self.f1_merged > self.f1_separate):
            raise ValueError(
                f"label {self.y:+d} inconsistent with F1 merged={self.f1_merged} "
                f"vs separate={self.f1_separate}"
            )
        object.__setattr__(self, "f", np.asarray(self.f, dtype=np.float64))


@dataclass(frozen=True)
class TrainingReport:
    n_documents: int
    n_rank_pairs: int
    n_accept_pos: int
    n_accept_neg: int
    n_merge_pos: int
    n_merge_neg: int
    rank_hinge: float
    accept_hinge: float
    merge_hinge: Optional[float]
    merge_degenerate: Optional[str]

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        total_accept = self.n_accept_pos + self.n_accept_neg
        total_merge = self.n_merge_pos + self.n_merge_neg
        d["accept_pos_fraction"] = self.n_accept_pos / total_accept if total_accept else None
        d["merge_pos_fraction"] = self.n_merge_pos / total_merge if total_merge else None
        return d


@dataclass(frozen=True)
class TrainedModels:
    rank: LinearModel
    accept: LinearModel
    merge: LinearModel
    report: TrainingReport


def _require_gold(d: DocRepr) -> str:
    if d.gold_label is None:
        raise ValueError(f"document {d.id!r} has no gold label; training requires one")
    return d.gold_label


def _feature_indices(n_features: int) -> tuple[int, ...]:
    if n_features == 4:
        return FEATURES_4_INDICES
    if n_features == 8:
        return FEATURES_8_INDICES
    raise ValueError("n_features must be 4 or 8")


def gen_rank_examples(
    corpus: Sequence[DocRepr],
    p: TemporalParams,
    k_neg: int = DEFAULT_K_NEG,
    n_features: int = 8,
    order_model: Optional[LinearModel] = None,
) -> list[RankPair]:
    """Teacher-forced replay emitting (gold, negative) preference pairs.

    Negatives are the k_neg best-ranked non-gold clusters. Before a ranking
    model exists they are ordered by the bootstrap signal (the first-view
    cosine); pass `order_model` for a second mining pass that re-ranks
    candidates with a trained model.
    """
    indices = list(_feature_indices(n_features))
    pool = ClusterPool(PoolConfig(keep_docs=False))
    label_to_cid: dict[str, int] = {}
    pairs: list[RankPair] = []
    for d in corpus:
        label = _require_gold(d)
        gold_cid = label_to_cid.get(label)
        if gold_cid is not None:
            snapshot = pool.live_clusters()
            feats = batch_doc_cluster_features(d, snapshot, p)[:, indices]
            gold_pos = next(i for i, c in enumerate(snapshot) if c.id == gold_cid)
            pos = feats[gold_pos]
            if order_model is not None:
                strengths = feats @ order_model.weights
            else:
                strengths = feats[:, 0]
            negatives = [
                (-strengths[i], snapshot[i].id, i)
                for i in range(len(snapshot))
                if i != gold_pos
            ]
            negatives.sort()
            for _, _, i in negatives[:k_neg]:
                pairs.append(RankPair(pos=pos, neg=feats[i]))
            pool.insert(gold_cid, d)
        else:
            label_to_cid[label] = pool.create_cluster(d)
    return pairs


def gen_accept_examples(
    corpus: Sequence[DocRepr],
    p: TemporalParams,
    rank_model: LinearModel,
    n_features: int = 8,
) -> list[LabeledExample]:
    """Teacher-forced replay emitting accept/reject examples.

    Positive: the document's gold cluster. Negative: the second-ranked
    cluster under the ranking model, skipping the gold cluster if it
    occupies that slot.
    """
    indices = list(_feature_indices(n_features))
    pool = ClusterPool(PoolConfig(keep_docs=False))
    label_to_cid: dict[str, int] = {}
    examples: list[LabeledExample] = []
    for d in corpus:
        label = _require_gold(d)
        gold_cid = label_to_cid.get(label)
        if gold_cid is not None:
            snapshot = pool.live_clusters()
            feats = batch_doc_cluster_features(d, snapshot, p)[:, indices]
            gold_pos = next(i for i, c in enumerate(snapshot) if c.id == gold_cid)
            examples.append(LabeledExample(f=feats[gold_pos], y=+1))
            if len(snapshot) >= 2:
                scores = feats @ rank_model.weights
                order = sorted(range(len(snapshot)), key=lambda i: (-scores[i], snapshot[i].id))
                second = order[1]
                if second == gold_pos:
                    if len(order) < 3:
                        second = None
                    else:
                        second = order[2]
                if second is not None:
                    examples.append(LabeledExample(f=feats[second], y=-1))
            pool.insert(gold_cid, d)
        else:
            label_to_cid[label] = pool.create_cluster(d)
    return examples


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def _positive_pairs(counts: Counter, same: Callable[[str, str], bool]) -> int:
    pairs = sum(_pair_count(n) for n in counts.values())
    labels = sorted(counts)
    for i, l1 in enumerate(labels):
        for l2 in labels[i + 1:]:
            if same(l1, l2):
                pairs += counts[l1] * counts[l2]
    return pairs


def _f1(tp: int, fp: int, fn: int) -> float:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def local_pair_f1(
    labels_a: Sequence[str],
    labels_b: Sequence[str],
    same: Callable[[str, str], bool] = lambda l1, l2: l1 == l2,
) -> tuple[float, float]:
    """Pairwise F1 over the union of two clusters, merged vs kept separate."""
    counts_a = Counter(labels_a)
    counts_b = Counter(labels_b)
    union = counts_a + counts_b
    n_a, n_b = len(labels_a), len(labels_b)

    tp_union = _positive_pairs(union, same)
    f1_merged = _f1(tp_union, _pair_count(n_a + n_b) - tp_union, 0)

    tp_a = _positive_pairs(counts_a, same)
    tp_b = _positive_pairs(counts_b, same)
    tp_sep = tp_a + tp_b
    fp_sep = (_pair_count(n_a) + _pair_count(n_b)) - tp_sep
    fn_sep = tp_union - tp_sep  # cross-cluster same-story pairs
    f1_separate = _f1(tp_sep, fp_sep, fn_sep)
    return f1_merged, f1_separate


def gen_merge_examples(
    corpus: Sequence[DocRepr],
    p: TemporalParams,
    v: SizeLimits,
    rank_model: LinearModel,
    accept_model: LinearModel,
    top_m: int = DEFAULT_MERGE_TOP_M,
    n_features: int = 8,
    same_story: Callable[[str, str], bool] = lambda l1, l2: l1 == l2,
) -> list[MergeSample]:
    """Run the real engine loop and label sampled cluster pairs by relative F1.

    After each document lands in cluster s, the top-m rank-ordered
    candidates are labeled; positive pairs are actually merged before the
    simulation continues, keeping the simulated state close to ideal.
    """
    labels = {d.id: _require_gold(d) for d in corpus}
    config = EngineConfig(
        temporal=p,
        size_limits=v,
        n_features=n_features,
        merge_enabled=False,
        merge_top_m=top_m,
    )
    engine = ClusteringEngine(rank_model, accept_model, None, config)
    samples: list[MergeSample] = []
    for d in corpus:
        record = engine.process_document(d)
        s_id = record.cluster_id
        others = [c for c in engine.pool.live_clusters() if c.id != s_id]
        if not others:
            continue
        src = engine.pool.get(s_id)
        for cand in engine.merge_candidates(src, others):
            src = engine.pool.get(s_id)
            f = engine.pair_vector(src, cand)
            f1_merged, f1_separate = local_pair_f1(
                [labels[m] for m in src.members],
                [labels[m] for m in cand.members],
                same_story,
            )
            y = +1 if f1_merged > f1_separate else -1
            samples.append(
                MergeSample(
                    f=f,
                    y=y,
                    src_id=s_id,
                    cand_id=cand.id,
                    f1_merged=f1_merged,
                    f1_separate=f1_separate,
                )
            )
            if y == +1:
                engine.pool.merge(s_id, cand.id)
    return samples


def train_all(
    corpus: Sequence[DocRepr],
    cfg: TrainConfig = TrainConfig(),
    p: TemporalParams = TemporalParams(),
    v: SizeLimits = SizeLimits(),
    n_features: int = 8,
    k_neg: int = DEFAULT_K_NEG,
    merge_top_m: int = DEFAULT_MERGE_TOP_M,
    mining_passes: int = 1,
    same_story: Callable[[str, str], bool] = lambda l1, l2: l1 == l2,
    out_dir: Optional[str | Path] = None,
    dump_dir: Optional[str | Path] = None,
) -> TrainedModels:
    """Generate all three training sets and fit the models in dependency order.

    mining_passes > 1 re-mines ranking negatives with the freshly trained
    model and retrains. A single-class merge set degenerates to a constant
    decision rather than failing the pipeline; the report records it.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    if mining_passes < 1:
        raise ValueError("mining_passes must be >= 1")

    rank_pairs = gen_rank_examples(corpus, p, k_neg=k_neg, n_features=n_features)
    if not rank_pairs:
        raise ValueError(
            "no ranking pairs generated: the corpus never has a gold cluster and a "
            "competitor live at the same time (single-story corpus?)"
        )
    rank_model = train_rank(rank_pairs, cfg)
    for _ in range(mining_passes - 1):
        rank_pairs = gen_rank_examples(
            corpus, p, k_neg=k_neg, n_features=n_features, order_model=rank_model
        )
        rank_model = train_rank(rank_pairs, cfg)

    accept_examples = gen_accept_examples(corpus, p, rank_model, n_features=n_features)
    accept_model = train_binary(accept_examples, cfg, kind="accept")

    merge_samples = gen_merge_examples(
        corpus, p, v, rank_model, accept_model,
        top_m=merge_top_m, n_features=n_features, same_story=same_story,
    )
    merge_examples = [LabeledExample(f=s.f, y=s.y) for s in merge_samples]
    merge_labels = {e.y for e in merge_examples}
    merge_degenerate = None
    merge_hinge = None
    merge_arity = n_features + 3
    if merge_labels == {+1, -1}:
        merge_model = train_binary(merge_examples, cfg, kind="merge")
        merge_hinge = binary_hinge_loss(merge_model, merge_examples)
    else:
        decision = +1 if merge_labels == {+1} else -1
        merge_model = constant_model(merge_arity, decision, "merge")
        merge_degenerate = (
            f"merge training set is single-class ({decision:+d}); "
            f"using a constant {decision:+d} decision"
        )

    report = TrainingReport(
        n_documents=len(corpus),
        n_rank_pairs=len(rank_pairs),
        n_accept_pos=sum(1 for e in accept_examples if e.y == +1),
        n_accept_neg=sum(1 for e in accept_examples if e.y == -1),
        n_merge_pos=sum(1 for s in merge_samples if s.y == +1),
        n_merge_neg=sum(1 for s in merge_samples if s.y == -1),
        rank_hinge=rank_hinge_loss(rank_model, rank_pairs),
        accept_hinge=binary_hinge_loss(accept_model, accept_examples),
        merge_hinge=merge_hinge,
        merge_degenerate=merge_degenerate,
    )
    trained = TrainedModels(rank=rank_model, accept=accept_model, merge=merge_model, report=report)
    if out_dir is not None:
        save_trained(trained, out_dir)
    if dump_dir is not None:
        dump = Path(dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
        with open(dump / "rank_pairs.jsonl", "w", encoding="utf-8") as fp:
            write_rank_pairs(rank_pairs, fp)
        with open(dump / "accept_examples.jsonl", "w", encoding="utf-8") as fp:
            write_labeled_examples(accept_examples, fp)
        with open(dump / "merge_samples.jsonl", "w", encoding="utf-8") as fp:
            write_merge_samples(merge_samples, fp)
    return trained


MODEL_FILENAMES = {"rank": "rank.model", "accept": "accept.model", "merge": "merge.model"}
REPORT_FILENAME = "training_report.json"


def save_trained(trained: TrainedModels, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind, filename in MODEL_FILENAMES.items():
        save_model(getattr(trained, kind), out / filename)
    (out / REPORT_FILENAME).write_text(
        json.dumps(trained.report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def write_rank_pairs(pairs: Sequence[RankPair], fp: IO[str]) -> None:
    for pair in pairs:
        fp.write(json.dumps({"pos": pair.pos.tolist(), "neg": pair.neg.tolist()}) + "\n")


def write_labeled_examples(examples: Sequence[LabeledExample], fp: IO[str]) -> None:
    for e in examples:
        fp.write(json.dumps({"f": e.f.tolist(), "y": e.y}) + "\n")


def write_merge_samples(samples: Sequence[MergeSample], fp: IO[str]) -> None:
    for s in samples:
        fp.write(
            json.dumps(
                {
                    "f": s.f.tolist(),
                    "y": s.y,
                    "src_id": s.src_id,
                    "cand_id": s.cand_id,
                    "f1_merged": s.f1_merged,
                    "f1_separate": s.f1_separate,
                }
            )
            + "\n"
        )
