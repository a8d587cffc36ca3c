"""Bi-encoder modelling of concepts and their commonsense properties."""

__version__ = "0.1.0"

from .corpus import PairDataset
from .encoder import BiEncoder, EncoderConfig, PromptTemplate, Vocabulary
from .metrics import f1_positive, map_mrr_p5
from .retrieval import EmbeddingMatrix, MipsIndex
from .splits import LabelledDataset, SplitPlan
from .trainer import TrainConfig, train

__all__ = [
    "BiEncoder",
    "EmbeddingMatrix",
    "EncoderConfig",
    "LabelledDataset",
    "MipsIndex",
    "PairDataset",
    "PromptTemplate",
    "SplitPlan",
    "TrainConfig",
    "Vocabulary",
    "f1_positive",
    "map_mrr_p5",
    "train",
]
