"""Classification and ranking metrics, plus the non-learned baselines.

All metric functions return fractions in [0, 1]; reports format them as
percentages with one decimal. Metric outputs never depend on input record
order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, MetricError
from .retrieval import EmbeddingMatrix
from .splits import REGIME_CON, REGIME_CON_PROP, REGIME_PROP, LabelledPair


@dataclass(frozen=True)
class Prediction:
    concept: str
    property: str
    score: float
    label: bool


def predictions_from_scorer(scorer, pairs) -> list[Prediction]:
    """Score labelled pairs with a callable scorer(concept, property)."""
    return [Prediction(x.concept, x.property, float(scorer(x.concept, x.property)), x.label)
            for x in pairs]


def f1_positive(preds, threshold: float = 0.5) -> float:
    """F1 of the positive label at a score threshold.

    A pair is predicted positive iff score >= threshold. Precision or
    recall over an empty set counts as 0; no gold positives at all makes
    the metric undefined and raises.
    """
    tp = fp = fn = 0
    gold_pos = 0
    for pred in preds:
        if not np.isfinite(pred.score):
            raise MetricError(f"non-finite score for ({pred.concept}, {pred.property})")
        positive = pred.score >= threshold
        gold_pos += pred.label
        tp += positive and pred.label
        fp += positive and not pred.label
        fn += (not positive) and pred.label
    if gold_pos == 0:
        raise MetricError("F1 of the positive label needs at least one gold positive")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


@dataclass
class RankedList:
    """One retrieval query: an ordered candidate list and its gold set."""

    query: str
    candidates: list[str]
    gold: set[str]

    def __post_init__(self):
        if len(set(self.candidates)) != len(self.candidates):
            raise InputError(f"duplicate candidates for query {self.query!r}")
        if not self.gold:
            raise MetricError(f"query {self.query!r} has no gold candidates")


@dataclass(frozen=True)
class RankingScores:
    mean_average_precision: float
    mean_reciprocal_rank: float
    precision_at_5: float


def average_precision(candidates, gold, cutoff: int | None = None) -> float:
    """AP of one ranking: mean precision at the gold hits, over the number
    of gold items retrievable within the cutoff (the list length when the
    cutoff is not given). An empty ranking scores 0."""
    if not candidates:
        return 0.0
    cutoff = len(candidates) if cutoff is None else min(cutoff, len(candidates))
    hits = 0
    precision_sum = 0.0
    for i, cand in enumerate(candidates[:cutoff], start=1):
        if cand in gold:
            hits += 1
            precision_sum += hits / i
    return precision_sum / min(len(gold), cutoff)


def map_mrr_p5(lists) -> RankingScores:
    """Mean average precision, mean reciprocal rank and precision at 5."""
    lists = list(lists)
    if not lists:
        raise MetricError("no ranked lists to score")
    ap_total = rr_total = p5_total = 0.0
    for ranked in lists:
        ap_total += average_precision(ranked.candidates, ranked.gold)
        rr = 0.0
        for i, cand in enumerate(ranked.candidates, start=1):
            if cand in ranked.gold:
                rr = 1.0 / i
                break
        rr_total += rr
        top5 = ranked.candidates[:5]
        p5_total += sum(1 for c in top5 if c in ranked.gold) / 5.0
    n = len(lists)
    return RankingScores(ap_total / n, rr_total / n, p5_total / n)


def always_true(pairs) -> list[Prediction]:
    return [Prediction(x.concept, x.property, 1.0, x.label) for x in pairs]


def random_baseline(pairs, seed: int = 0) -> list[Prediction]:
    """Positive with probability 0.5 per pair, deterministic given the seed.

    Pairs are scored in sorted order so the outcome does not depend on
    input record order."""
    rng = np.random.default_rng(seed)
    ordered = sorted(pairs, key=lambda x: (x.concept, x.property))
    return [Prediction(x.concept, x.property, float(rng.integers(2)), x.label)
            for x in ordered]


def _cosine_rows(queries: np.ndarray, pool: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(queries, axis=1, keepdims=True)
    pn = np.linalg.norm(pool, axis=1, keepdims=True)
    qn[qn == 0] = 1.0
    pn[pn == 0] = 1.0
    return (queries / qn) @ (pool / pn).T


def _neighbour_table(test_names, train_names, emb: EmbeddingMatrix, k: int):
    """k nearest train names per test name by cosine, ties lexicographic."""
    dim = emb.dim
    missing = 0

    def vec(name):
        nonlocal missing
        if name in emb:
            return emb.vector(name)
        missing += 1
        return np.zeros(dim, dtype=np.float32)

    test_m = np.stack([vec(n) for n in test_names]) if test_names else np.zeros((0, dim))
    train_m = np.stack([vec(n) for n in train_names])
    sims = _cosine_rows(test_m, train_m)
    table = {}
    for row, name in enumerate(test_names):
        order = sorted(range(len(train_names)), key=lambda j: (-sims[row, j], train_names[j]))
        table[name] = [train_names[j] for j in order[:k]]
    return table, missing


def nn_classify(train_pairs, test_pairs, emb: EmbeddingMatrix, k: int, regime: str) -> list[Prediction]:
    """Majority-vote nearest-neighbour classifier over static embeddings.

    The vote set depends on the regime: the k most cosine-similar training
    concepts (concept split), the k most similar training properties
    (property split), or their k x k grid (both). Vote ties predict the
    negative label; names without an embedding fall back to a zero vector.
    """
    train_pairs = list(train_pairs)
    test_pairs = list(test_pairs)
    labels = {(x.concept, x.property): x.label for x in train_pairs}
    train_concepts = sorted({x.concept for x in train_pairs})
    train_properties = sorted({x.property for x in train_pairs})
    test_concepts = sorted({x.concept for x in test_pairs})
    test_properties = sorted({x.property for x in test_pairs})

    pools = {REGIME_CON: len(train_concepts), REGIME_PROP: len(train_properties)}
    smallest = min(pools.values()) if regime == REGIME_CON_PROP else pools.get(regime)
    if smallest is None:
        raise InputError(f"unknown regime {regime!r}")
    if k > smallest:
        warnings.warn(f"k={k} exceeds the {smallest} available neighbours; using all")
        k = smallest

    concept_nn = property_nn = None
    if regime in (REGIME_CON, REGIME_CON_PROP):
        concept_nn, _ = _neighbour_table(test_concepts, train_concepts, emb, k)
    if regime in (REGIME_PROP, REGIME_CON_PROP):
        property_nn, _ = _neighbour_table(test_properties, train_properties, emb, k)

    out = []
    for x in test_pairs:
        if regime == REGIME_CON:
            votes = [labels[(c, x.property)] for c in concept_nn[x.concept]
                     if (c, x.property) in labels]
        elif regime == REGIME_PROP:
            votes = [labels[(x.concept, p)] for p in property_nn[x.property]
                     if (x.concept, p) in labels]
        else:
            votes = [labels[(c, p)] for c in concept_nn[x.concept]
                     for p in property_nn[x.property] if (c, p) in labels]
        positive = sum(votes) > len(votes) / 2 if votes else False
        out.append(Prediction(x.concept, x.property, 1.0 if positive else 0.0, x.label))
    return out


@dataclass
class FoldScores:
    fold: int
    f1: float
    test_pairs: int


@dataclass
class EvalReport:
    regime: str
    folds: list[FoldScores] = field(default_factory=list)
    macro_f1: float = 0.0
    micro_f1: float = 0.0

    def as_dict(self) -> dict:
        return {
            "regime": self.regime,
            "folds": [
                {
                    "fold": f.fold,
                    "f1": f.f1,
                    "f1_pct": format_percent(f.f1),
                    "test_pairs": f.test_pairs,
                }
                for f in self.folds
            ],
            "macro_f1": self.macro_f1,
            "macro_f1_pct": format_percent(self.macro_f1),
            "micro_f1": self.micro_f1,
            "micro_f1_pct": format_percent(self.micro_f1),
        }


def summarize_folds(regime: str, fold_predictions, threshold: float = 0.5) -> EvalReport:
    """Per-fold F1 plus the macro (mean of folds, the headline) and micro
    (all folds pooled) aggregates."""
    report = EvalReport(regime)
    pooled = []
    for i, preds in enumerate(fold_predictions):
        report.folds.append(FoldScores(i, f1_positive(preds, threshold), len(preds)))
        pooled.extend(preds)
    if not report.folds:
        raise MetricError("no folds to summarize")
    report.macro_f1 = sum(f.f1 for f in report.folds) / len(report.folds)
    report.micro_f1 = f1_positive(pooled, threshold)
    return report


def format_percent(x: float) -> str:
    return f"{100.0 * x:.1f}"


def format_report(report: EvalReport) -> str:
    lines = [f"regime: {report.regime}"]
    for f in report.folds:
        lines.append(f"  fold {f.fold}: F1 {format_percent(f.f1)}  ({f.test_pairs} pairs)")
    lines.append(f"  macro F1 {format_percent(report.macro_f1)}")
    lines.append(f"  micro F1 {format_percent(report.micro_f1)}")
    return "\n".join(lines)
