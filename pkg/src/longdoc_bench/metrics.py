"""Classification and ranked-retrieval metrics.

Conventions: macro-F1 scores 0/0 as 0; multi-label accuracy is subset (exact-match)
accuracy; AUC is the Mann-Whitney statistic with ties counted half; MAP runs over the
full ranked list; nDCG uses binary gains and a log2(rank + 1) discount.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .heads import DocPrediction
from .retrieval import RankedList


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    task: str  # "classification" or "retrieval"
    n_items: int
    micro_f1: float | None = None
    macro_f1: float | None = None
    accuracy: float | None = None
    auc: float | None = None
    map: float | None = None
    mrr: float | None = None
    recall_at_k: dict[int, float] = field(default_factory=dict)
    ndcg_at_k: dict[int, float] = field(default_factory=dict)


# --- classification ----------------------------------------------------------


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def f1_scores(pred: np.ndarray, gold: np.ndarray) -> tuple[float, float]:
    """(micro, macro) F1 over (n_items, n_labels) binary indicator matrices."""
    pred = np.asarray(pred, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    tp = (pred & gold).sum(axis=0).astype(np.float64)
    fp = (pred & ~gold).sum(axis=0).astype(np.float64)
    fn = (~pred & gold).sum(axis=0).astype(np.float64)
    micro = _safe_div(2 * tp.sum(), 2 * tp.sum() + fp.sum() + fn.sum())
    per_label = [_safe_div(2 * t, 2 * t + p + n) for t, p, n in zip(tp, fp, fn)]
    return micro, float(np.mean(per_label))


def subset_accuracy(pred: np.ndarray, gold: np.ndarray) -> float:
    return float(np.mean(np.all(np.asarray(pred, bool) == np.asarray(gold, bool), axis=1)))


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative")
    # average ranks give ties half credit, matching the pairwise count exactly
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_auc_multilabel(scores: np.ndarray, labels: np.ndarray) -> float:
    """Unweighted mean of per-label AUC over labels that have both classes."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    values = []
    for j in range(labels.shape[1]):
        col = labels[:, j]
        if col.all() or not col.any():
            warnings.warn(f"label {j} has a single class in the evaluation set; skipped for AUC", RuntimeWarning, stacklevel=2)
            continue
        values.append(roc_auc(scores[:, j], col))
    if not values:
        raise MetricError("AUC undefined: every label has a single class")
    return float(np.mean(values))


def eval_classification(
    preds: Sequence[DocPrediction], gold: Mapping[str, Sequence[int]], task_kind: str, n_labels: int
) -> MetricReport:
    """``gold`` maps doc id to the gold label indices (exactly one for single-label tasks)."""
    if not preds:
        raise MetricError("no predictions to evaluate")
    ids = [p.doc_id for p in preds]
    if set(ids) != set(gold) or len(ids) != len(gold):
        raise MetricError("prediction ids do not match gold ids")
    P = np.zeros((len(preds), n_labels), dtype=bool)
    G = np.zeros((len(preds), n_labels), dtype=bool)
    S = np.stack([p.probs for p in preds])
    for i, p in enumerate(preds):
        P[i, list(p.predicted)] = True
        G[i, list(gold[p.doc_id])] = True
    micro, macro = f1_scores(P, G)
    if task_kind == "singlelabel":
        acc = float(np.mean([p.predicted[0] == gold[p.doc_id][0] for p in preds]))
    elif task_kind == "multilabel":
        acc = subset_accuracy(P, G)
    else:
        raise MetricError(f"not a classification task: {task_kind!r}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            auc = roc_auc_multilabel(S, G)
    except MetricError:
        warnings.warn("AUC undefined on this evaluation set", RuntimeWarning, stacklevel=2)
        auc = None
    return MetricReport("classification", len(preds), micro_f1=micro, macro_f1=macro, accuracy=acc, auc=auc)


# --- retrieval ---------------------------------------------------------------


def average_precision(ranking: Sequence[str], relevant: set[str]) -> float:
    hits = 0
    total = 0.0
    for i, cid in enumerate(ranking, start=1):
        if cid in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def reciprocal_rank(ranking: Sequence[str], relevant: set[str]) -> float:
    for i, cid in enumerate(ranking, start=1):
        if cid in relevant:
            return 1.0 / i
    return 0.0


def recall_at_k(ranking: Sequence[str], relevant: set[str], k: int) -> float:
    return len(relevant.intersection(ranking[:k])) / len(relevant)


def ndcg_at_k(ranking: Sequence[str], relevant: set[str], k: int) -> float:
    dcg = sum(1.0 / math.log2(i + 1) for i, cid in enumerate(ranking[:k], start=1) if cid in relevant)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


def eval_retrieval(
    lists: Sequence[RankedList], judgments: Mapping[str, set[str]], ks: Sequence[int] = (10,)
) -> MetricReport:
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise MetricError("cutoffs must be positive integers")
    per_q: list[tuple[float, float, list[float], list[float]]] = []
    for rl in lists:
        if rl.query_id not in judgments:
            raise MetricError(f"query {rl.query_id!r} has no relevance judgments")
        rel = set(judgments[rl.query_id])
        if not rel:
            warnings.warn(f"query {rl.query_id!r} has an empty judgment set; excluded", RuntimeWarning, stacklevel=2)
            continue
        ranking = rl.ids
        per_q.append(
            (
                average_precision(ranking, rel),
                reciprocal_rank(ranking, rel),
                [recall_at_k(ranking, rel, k) for k in ks],
                [ndcg_at_k(ranking, rel, k) for k in ks],
            )
        )
    if not per_q:
        raise MetricError("no evaluable queries")
    n = len(per_q)
    return MetricReport(
        "retrieval",
        n,
        map=sum(q[0] for q in per_q) / n,
        mrr=sum(q[1] for q in per_q) / n,
        recall_at_k={k: sum(q[2][j] for q in per_q) / n for j, k in enumerate(ks)},
        ndcg_at_k={k: sum(q[3][j] for q in per_q) / n for j, k in enumerate(ks)},
    )
