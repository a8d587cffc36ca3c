"""Fold-by-fold evaluation of a split plan with interchangeable scorers."""

from __future__ import annotations

from dataclasses import replace

from .corpus import SOURCE_BENCHMARK, PairDataset
from .encoder import BiEncoder, EncoderConfig
from .errors import DatasetError
from .metrics import (
    EvalReport,
    Prediction,
    always_true,
    nn_classify,
    predictions_from_scorer,
    random_baseline,
    summarize_folds,
)
from .retrieval import EmbeddingMatrix
from .splits import LabelledDataset, SplitPlan
from .trainer import TrainConfig, holdout_validation, train


def method_always_true():
    def run(train_pairs, test_pairs, regime, fold):
        return always_true(test_pairs)
    return run


def method_random(seed: int = 0):
    def run(train_pairs, test_pairs, regime, fold):
        return random_baseline(test_pairs, seed=seed + fold)
    return run


def method_model(model: BiEncoder):
    """Score test pairs directly with an already-trained model."""
    def run(train_pairs, test_pairs, regime, fold):
        return predictions_from_scorer(model.score, test_pairs)
    return run


def method_knn(emb: EmbeddingMatrix, k: int):
    def run(train_pairs, test_pairs, regime, fold):
        return nn_classify(train_pairs, test_pairs, emb, k, regime)
    return run


def method_finetune(
    train_cfg: TrainConfig | None = None,
    encoder_cfg: EncoderConfig | None = None,
    val_fraction: float = 0.1,
    base_model: BiEncoder | None = None,
):
    """Train a bi-encoder per fold on the fold's positive pairs.

    The fold's positives become the training pair set (negatives arise
    in-batch); a concept-level slice is held out for early stopping. The
    per-fold seed is offset by the fold index so folds stay independent
    but reproducible.
    """
    train_cfg = train_cfg or TrainConfig()

    def run(train_pairs, test_pairs, regime, fold):
        positives = PairDataset()
        for x in train_pairs:
            if x.label:
                positives.add(x.concept, x.property, SOURCE_BENCHMARK)
        if len(positives) == 0:
            raise DatasetError(f"fold {fold} has no positive training pairs")
        cfg = replace(train_cfg, seed=train_cfg.seed + fold)
        tr, va = holdout_validation(positives, val_fraction, seed=cfg.seed)
        model = None
        if base_model is not None:
            model = BiEncoder(base_model.vocab, base_model.config, seed=cfg.seed)
            model.load_state_arrays(base_model.state_arrays())
        result = train(tr, va, cfg, model=model, encoder_config=encoder_cfg)
        return predictions_from_scorer(result.model.score, test_pairs)

    return run


def evaluate_plan(plan: SplitPlan, data: LabelledDataset, method) -> EvalReport:
    """Apply a scoring method fold by fold and summarize the F1 scores."""
    plan.check_invariants(data)
    fold_predictions: list[list[Prediction]] = []
    for fold in plan.folds:
        fold_predictions.append(
            method(
                fold.train_pairs(data, plan.regime),
                fold.test_pairs(data, plan.regime),
                plan.regime,
                fold.index,
            )
        )
    return summarize_folds(plan.regime, fold_predictions)
