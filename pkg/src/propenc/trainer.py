"""Training loop: in-batch negative sampling, BCE loss, AdamW, early stopping.

A mini-batch is built by sampling a handful of concepts and one positive
property for each; the batch's positives are every known pair inside the
sampled concept x property grid and its negatives are the rest of that
grid. The loss is binary cross-entropy over the grid, computed through
softplus so a saturated score never produces log(0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .corpus import PairDataset
from .encoder import BiEncoder, EncoderConfig
from .errors import DimensionError, InputError, TrainingError


@dataclass
class Batch:
    concepts: list[str]
    properties: list[str]
    positives: list[tuple[str, str]]
    negatives: list[tuple[str, str]]

    def size(self) -> int:
        return len(self.positives) + len(self.negatives)


@dataclass
class TrainConfig:
    concepts_per_batch: int = 8
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError("learning rate must be positive")
        if self.patience > self.max_epochs:
            raise InputError("patience cannot exceed max_epochs")

    def as_dict(self) -> dict:
        return {
            "concepts_per_batch": self.concepts_per_batch,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
        }


def sample_batch(data: PairDataset, rng: np.random.Generator, k: int) -> Batch:
    """Sample a batch of k concepts plus one positive property each.

    Concepts are drawn uniformly without replacement; each concept's
    property is drawn uniformly from its positives. The batch positives
    are the sampled grid intersected with the known pairs, the negatives
    are the rest of the grid.
    """
    concepts_all = data.concepts()
    if k < 1 or k > len(concepts_all):
        raise InputError(f"batch size {k} out of range for {len(concepts_all)} concepts")
    by_concept = data.positives_by_concept()
    picked = rng.choice(len(concepts_all), size=k, replace=False)
    concepts = [concepts_all[i] for i in picked]
    properties: list[str] = []
    seen = set()
    for c in concepts:
        options = by_concept[c]
        p = options[int(rng.integers(len(options)))]
        if p not in seen:
            seen.add(p)
            properties.append(p)
    positives, negatives = [], []
    for c in concepts:
        for p in properties:
            (positives if (c, p) in data else negatives).append((c, p))
    return Batch(concepts, properties, positives, negatives)


def batch_loss(model: BiEncoder, batch: Batch) -> T.Tensor:
    """Summed binary cross-entropy over the batch grid.

    Every grid cell is scored as sigmoid(concept . property); positives
    contribute -log(score) and negatives -log(1 - score), both computed
    as softplus of the raw inner product for stability.
    """
    if not batch.concepts or not batch.properties:
        raise InputError("cannot compute the loss of an empty batch")
    concept_rows = T.stack_rows([model.concept_tensor(c) for c in batch.concepts])
    property_rows = T.stack_rows([model.property_tensor(p) for p in batch.properties])
    scores = T.matmul(concept_rows, T.transpose(property_rows))
    positive = set(batch.positives)
    mask = np.zeros((len(batch.concepts), len(batch.properties)))
    for i, c in enumerate(batch.concepts):
        for j, p in enumerate(batch.properties):
            if (c, p) in positive:
                mask[i, j] = 1.0
    pos_mask = T.Tensor(mask)
    neg_mask = T.Tensor(1.0 - mask)
    pos_term = T.sum_all(T.mul(pos_mask, T.softplus(T.neg(scores))))
    neg_term = T.sum_all(T.mul(neg_mask, T.softplus(scores)))
    return T.add(pos_term, neg_term)


class AdamW:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, named_tensors, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = dict(named_tensors)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data, dtype=np.float64) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data, dtype=np.float64) for name, p in self.params.items()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise DimensionError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name}")
            if self.weight_decay:
                p.data -= (self.lr * self.weight_decay) * p.data
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g.astype(np.float64) ** 2)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data -= (self.lr * update).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    best: bool

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "best": self.best,
        }


@dataclass
class TrainResult:
    model: BiEncoder
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf


def holdout_validation(data: PairDataset, fraction: float = 0.1, seed: int = 0):
    """Split a pair dataset into train/validation by whole concepts."""
    concepts = data.concepts()
    if len(concepts) < 2:
        raise InputError("need at least two concepts to hold out validation data")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(concepts))
    n_val = max(1, int(round(len(concepts) * fraction)))
    if n_val >= len(concepts):
        n_val = len(concepts) - 1
    val_set = {concepts[i] for i in order[:n_val]}
    train_ds, val_ds = PairDataset(), PairDataset()
    for pair in data.pairs():
        target = val_ds if pair.concept in val_set else train_ds
        target.add(pair.concept, pair.property, pair.source, pair.weight)
    return train_ds, val_ds


def _validation_batches(val: PairDataset, k: int, seed: int, replays: int = 3) -> list[Batch]:
    # replay the in-batch construction deterministically so the validation
    # loss is comparable across epochs; several replays with different
    # property draws keep the signal from plateauing on one lucky draw
    rng = np.random.default_rng(seed)
    concepts = val.concepts()
    by_concept = val.positives_by_concept()
    batches = []
    for _ in range(replays):
        for start in range(0, len(concepts), k):
            chunk = concepts[start:start + k]
            properties, seen = [], set()
            for c in chunk:
                options = by_concept[c]
                p = options[int(rng.integers(len(options)))]
                if p not in seen:
                    seen.add(p)
                    properties.append(p)
            positives, negatives = [], []
            for c in chunk:
                for p in properties:
                    (positives if (c, p) in val else negatives).append((c, p))
            batches.append(Batch(chunk, properties, positives, negatives))
    return batches


def _mean_loss(model: BiEncoder, batches: list[Batch]) -> float:
    total, count = 0.0, 0
    with T.no_grad():
        for batch in batches:
            total += float(batch_loss(model, batch).data)
            count += batch.size()
    return total / max(count, 1)


def train(
    data: PairDataset,
    val: PairDataset,
    cfg: TrainConfig,
    model: BiEncoder | None = None,
    encoder_config: EncoderConfig | None = None,
) -> TrainResult:
    """Train a bi-encoder with early stopping on the validation loss.

    One epoch is ceil(|C| / batch concepts) sampled batches. The weights
    of the best validation epoch are restored before returning; training
    stops once `patience` consecutive epochs fail to improve. A non-finite
    loss aborts with an error naming the epoch.
    """
    overlap = set(data.pair_keys()) & set(val.pair_keys())
    if overlap:
        raise InputError(f"validation pairs overlap training pairs, e.g. {sorted(overlap)[0]}")
    if len(val) == 0:
        raise InputError("validation dataset is empty")
    if model is None:
        model = BiEncoder.for_dataset(data, encoder_config, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    k = min(cfg.concepts_per_batch, len(data.concepts()))
    optimizer = AdamW(
        model.named_tensors(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    val_batches = _validation_batches(val, k, cfg.seed + 1)
    batches_per_epoch = math.ceil(len(data.concepts()) / k)

    result = TrainResult(model=model)
    best_state = model.state_arrays()
    epochs_since_best = 0
    for epoch in range(cfg.max_epochs):
        train_total, train_pairs = 0.0, 0
        for _ in range(batches_per_epoch):
            batch = sample_batch(data, rng, k)
            T.new_tape()
            model.zero_grads()
            loss = batch_loss(model, batch)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            T.backward(loss)
            optimizer.step()
            train_total += value
            train_pairs += batch.size()
        T.new_tape()  # drop references to the last step's graph
        val_loss = _mean_loss(model, val_batches)
        if not math.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        improved = val_loss < result.best_val_loss
        result.log.append(
            EpochRecord(epoch, train_total / max(train_pairs, 1), val_loss, improved)
        )
        if improved:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_state = model.state_arrays()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best > cfg.patience:
                break
    model.load_state_arrays(best_state)
    return result
