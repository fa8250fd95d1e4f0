"""Clustering metrics: standard pairwise F1 and BCubed precision/recall.

Gold identity is a per-document label plus an optional set of positive
connections between labels (how crosslingual stories are annotated).
Standard F1 honors direct connections only by default; BCubed collapses
labels into connected components, which is the minimal equivalence
closure Correctness() needs. All zero denominators evaluate to 0.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

@dataclass(frozen=True)
class GoldStandard:
    """doc_id -> gold label, plus positive label-pair connections."""

    labels: Mapping[str, str]
    connections: frozenset[frozenset[str]] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", dict(self.labels))
        conns = frozenset(frozenset(pair) for pair in self.connections)
        known = set(self.labels.values())
        for pair in conns:
            if len(pair) != 2:
                raise ValueError(f"connection must join two distinct labels: {set(pair)}")
            unknown = pair - known
            if unknown:
                raise ValueError(f"connection references unknown labels: {sorted(unknown)}")
        object.__setattr__(self, "connections", conns)

    def collapsed_labels(self) -> dict[str, str]:
        """Labels rewritten to connected-component representatives."""
        parent: dict[str, str] = {}

        def find(x: str) -> str:
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for pair in self.connections:
            a, b = sorted(pair)
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        return {doc: find(label) for doc, label in self.labels.items()}


@dataclass(frozen=True)
class EvalReport:
    std_p: float
    std_r: float
    std_f1: float
    bcubed_p: float
    bcubed_r: float
    bcubed_f1: float
    n_docs: int
    n_clusters: int

    def to_dict(self) -> dict:
        return {
            "standard": {"p": self.std_p, "r": self.std_r, "f1": self.std_f1},
            "bcubed": {"p": self.bcubed_p, "r": self.bcubed_r, "f1": self.bcubed_f1},
            "n_docs": self.n_docs,
            "n_clusters": self.n_clusters,
        }


def story_predicate(g: GoldStandard, closure: bool = False):
    """Callable (label, label) -> bool implementing the same-story relation."""
    if closure:
        comp = _label_components(g)
        return lambda l1, l2: comp.get(l1, l1) == comp.get(l2, l2)
    conns = g.connections
    return lambda l1, l2: l1 == l2 or frozenset((l1, l2)) in conns


def same_story(l1: str, l2: str, g: GoldStandard, closure: bool = False) -> bool:
    """True iff the labels match or share a positive connection.

    closure=True additionally accepts labels joined transitively.
    """
    return story_predicate(g, closure=closure)(l1, l2)


def _label_components(g: GoldStandard) -> dict[str, str]:
    comp: dict[str, str] = {}
    for doc, rep in g.collapsed_labels().items():
        comp[g.labels[doc]] = rep
    return comp


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def _check_coverage(pred: Mapping[str, int], g: GoldStandard) -> list[str]:
    docs = sorted(g.labels)
    missing = [d for d in docs if d not in pred]
    if missing:
        raise ValueError(
            f"{len(missing)} gold-labeled documents missing from predictions, "
            f"e.g. {missing[:5]}"
        )
    return docs


def standard_f1(
    pred: Mapping[str, int], g: GoldStandard, closure: bool = False
) -> tuple[float, float, float]:
    """Pairwise precision/recall/F1 over all unordered document pairs."""
    docs = _check_coverage(pred, g)
    same = story_predicate(g, closure=closure)

    clusters: dict[int, Counter] = defaultdict(Counter)
    totals: Counter = Counter()
    for doc in docs:
        label = g.labels[doc]
        clusters[pred[doc]][label] += 1
        totals[label] += 1

    def positive_pairs(counts: Counter) -> int:
        pairs = sum(_pair_count(n) for n in counts.values())
        labels = sorted(counts)
        for i, l1 in enumerate(labels):
            for l2 in labels[i + 1:]:
                if same(l1, l2):
                    pairs += counts[l1] * counts[l2]
        return pairs

    tp = sum(positive_pairs(counts) for counts in clusters.values())
    same_pred = sum(_pair_count(sum(c.values())) for c in clusters.values())
    all_positive = positive_pairs(totals)
    fp = same_pred - tp
    fn = all_positive - tp

    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def bcubed(pred: Mapping[str, int], g: GoldStandard) -> tuple[float, float, float]:
    """BCubed P/R/F1 with gold identity collapsed over positive connections."""
    docs = _check_coverage(pred, g)
    collapsed = g.collapsed_labels()

    cluster_label_counts: dict[int, Counter] = defaultdict(Counter)
    cluster_sizes: Counter = Counter()
    label_totals: Counter = Counter()
    for doc in docs:
        label = collapsed[doc]
        cid = pred[doc]
        cluster_label_counts[cid][label] += 1
        cluster_sizes[cid] += 1
        label_totals[label] += 1

    p_sum = 0.0
    r_sum = 0.0
    for doc in docs:
        label = collapsed[doc]
        cid = pred[doc]
        correct = cluster_label_counts[cid][label]
        p_sum += correct / cluster_sizes[cid]
        r_sum += correct / label_totals[label]

    n = len(docs)
    p = p_sum / n if n else 0.0
    r = r_sum / n if n else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def evaluate(pred: Mapping[str, int], g: GoldStandard, closure: bool = False) -> EvalReport:
    std = standard_f1(pred, g, closure=closure)
    bc = bcubed(pred, g)
    return EvalReport(
        std_p=std[0],
        std_r=std[1],
        std_f1=std[2],
        bcubed_p=bc[0],
        bcubed_r=bc[1],
        bcubed_f1=bc[2],
        n_docs=len(g.labels),
        n_clusters=len(set(pred[d] for d in g.labels)),
    )


def format_report_table(report: EvalReport, title: str = "all") -> str:
    """Aligned table with BCubed and Standard F1/P/R columns, scores in percent."""
    header = (
        f"{'':<12}|{'BCubed':^26}|{'Standard':^26}|{'Clusters':>9}\n"
        f"{'':<12}|{'F1':^8} {'P':^8} {'R':^8} |{'F1':^8} {'P':^8} {'R':^8} |"
    )
    row = (
        f"{title:<12}|"
        f"{100 * report.bcubed_f1:^8.2f} {100 * report.bcubed_p:^8.2f} "
        f"{100 * report.bcubed_r:^8.2f} |"
        f"{100 * report.std_f1:^8.2f} {100 * report.std_p:^8.2f} "
        f"{100 * report.std_r:^8.2f} |"
        f"{report.n_clusters:>9}"
    )
    return header + "\n" + row


def load_gold_labels(fp: IO[str]) -> tuple[dict[str, str], dict[str, str]]:
    """Read a labels JSONL file; returns (doc_id -> label, doc_id -> lang)."""
    labels: dict[str, str] = {}
    langs: dict[str, str] = {}
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            doc_id = rec["id"]
            labels[doc_id] = str(rec["label"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"gold labels line {lineno}: {exc}") from exc
        if "lang" in rec:
            langs[doc_id] = rec["lang"]
    return labels, langs


def load_connections(fp: IO[str]) -> frozenset[frozenset[str]]:
    """Read tab-separated positive label pairs, one per line."""
    pairs = set()
    for lineno, line in enumerate(fp, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(
                f"connections line {lineno}: expected 'labelA<TAB>labelB', got {line!r}"
            )
        if parts[0] != parts[1]:
            pairs.add(frozenset(parts))
    return frozenset(pairs)


def load_assignments(fp: IO[str]) -> dict[str, int]:
    """Read engine assignment JSONL into doc_id -> cluster_id."""
    pred: dict[str, int] = {}
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            pred[rec["doc_id"]] = int(rec["cluster_id"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"assignments line {lineno}: {exc}") from exc
    return pred


def load_pool_assignments(fp: IO[str]) -> dict[str, int]:
    """Derive doc_id -> cluster_id from a pool export JSONL."""
    pred: dict[str, int] = {}
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            for doc_id in rec["members"]:
                pred[doc_id] = int(rec["id"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"pool export line {lineno}: {exc}") from exc
    return pred
