"""Shared fixtures and independent brute-force oracles.

The oracles here re-derive expected values from first principles (pair
enumeration, per-document averaging, batch means) and must stay
independent of the implementations they check.
"""
from __future__ import annotations

import numpy as np
import pytest

from storystream.domain import DocRepr
from storystream.evaluation import GoldStandard, same_story


def make_doc(
    doc_id: str,
    vec,
    day: int = 0,
    label: str | None = None,
    d2=None,
    d3=None,
) -> DocRepr:
    v = np.asarray(vec, dtype=np.float64)
    return DocRepr(
        id=doc_id,
        d1=v,
        d2=np.asarray(d2, dtype=np.float64) if d2 is not None else v.copy(),
        d3=np.asarray(d3, dtype=np.float64) if d3 is not None else v.copy(),
        ts=day,
        gold_label=label,
    )


def brute_standard_f1(pred, gold: GoldStandard, closure: bool = False):
    """Direct unordered-pair enumeration of TP/FP/FN."""
    docs = sorted(gold.labels)
    tp = fp = fn = 0
    for i, a in enumerate(docs):
        for b in docs[i + 1:]:
            story = same_story(gold.labels[a], gold.labels[b], gold, closure=closure)
            together = pred[a] == pred[b]
            if together and story:
                tp += 1
            elif together:
                fp += 1
            elif story:
                fn += 1
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def brute_bcubed(pred, gold: GoldStandard):
    """Per-document averaging of the correctness indicator, straight from
    the definition (collapsed gold identity)."""
    collapsed = gold.collapsed_labels()
    docs = sorted(gold.labels)
    p_terms = []
    r_terms = []
    for i in docs:
        cluster_mates = [j for j in docs if pred[j] == pred[i]]
        label_mates = [j for j in docs if collapsed[j] == collapsed[i]]
        correct_in_cluster = sum(1 for j in cluster_mates if collapsed[j] == collapsed[i])
        correct_in_label = sum(1 for j in label_mates if pred[j] == pred[i])
        p_terms.append(correct_in_cluster / len(cluster_mates))
        r_terms.append(correct_in_label / len(label_mates))
    p = float(np.mean(p_terms)) if p_terms else 0.0
    r = float(np.mean(r_terms)) if r_terms else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def random_metric_instance(rng: np.random.Generator, max_docs: int = 12):
    """A random clustering instance: predictions plus a gold standard with
    occasional positive connections."""
    n = int(rng.integers(1, max_docs + 1))
    docs = [f"d{i}" for i in range(n)]
    label_pool = ["a", "b", "c", "d", "e"]
    labels = {d: label_pool[int(rng.integers(0, len(label_pool)))] for d in docs}
    present = sorted(set(labels.values()))
    connections = set()
    for i, l1 in enumerate(present):
        for l2 in present[i + 1:]:
            if rng.random() < 0.25:
                connections.add(frozenset((l1, l2)))
    pred = {d: int(rng.integers(0, 4)) for d in docs}
    return pred, GoldStandard(labels=labels, connections=frozenset(connections))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
