"""Bundled synthetic fixtures for the test suite and pipeline demos.

The planted benchmark is a grid of concepts in latent classes whose
positives are exactly the within-class pairs, corrupted by a small rate
of label noise. Concept and property phrases compose a shared class token
with a shared modifier token, so held-out phrases are unseen combinations
of seen words; class membership remains the ground truth an evaluator can
check against.

Run ``python -m propenc.fixtures OUTDIR`` to write all fixture files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import PairDataset, SOURCE_BENCHMARK
from .splits import Fold, LabelledDataset


@dataclass
class PlantedData:
    noisy: LabelledDataset
    truth: LabelledDataset
    concept_class: dict[str, int]
    property_class: dict[str, int]
    classes: int
    props_per_class: int


def planted_dataset(
    classes: int = 4,
    concepts_per_class: int = 10,
    props_per_class: int = 5,
    noise: float = 0.05,
    seed: int = 7,
) -> PlantedData:
    concept_class = {
        f"mod{i} kind{k}": k for k in range(classes) for i in range(concepts_per_class)
    }
    property_class = {
        f"trait{k} form{j}": k for k in range(classes) for j in range(props_per_class)
    }
    truth = LabelledDataset()
    for c, kc in concept_class.items():
        for p, kp in property_class.items():
            truth.add(c, p, kc == kp)
    keys = sorted((c, p) for c in concept_class for p in property_class)
    rng = np.random.default_rng(seed)
    flipped = set(rng.choice(len(keys), size=int(noise * len(keys)), replace=False))
    noisy = LabelledDataset()
    for i, (c, p) in enumerate(keys):
        label = truth.label(c, p)
        noisy.add(c, p, (not label) if i in flipped else label)
    return PlantedData(noisy, truth, concept_class, property_class, classes, props_per_class)


def diagonal_property_fold(planted: PlantedData) -> Fold:
    """Hold out one property per class, rotating the variant per class.

    Every class keeps most of its properties in training and every
    variant token still occurs in some training property, so held-out
    properties are genuinely unseen combinations rather than unseen words.
    """
    held_out = sorted(
        f"trait{k} form{k % planted.props_per_class}" for k in range(planted.classes)
    )
    return Fold(0, [], held_out)


def positives_only(labelled: LabelledDataset) -> PairDataset:
    ds = PairDataset()
    for c, p in labelled.positives():
        ds.add(c, p, SOURCE_BENCHMARK)
    return ds


# 4-row hypernym fixture around the nested-hypernym heuristic's two
# canonical cases (a lexicon-final modifier and a hyphenated one).
STRAWBERRY_MSCG_ROWS = [
    "strawberry\tvitamin C rich food\t120",
    "strawberry\tfood\t300",
    "strawberry\tlow-sugar berry\t80",
    "strawberry\tberry\t150",
]

# 10-row scored hypernym fixture with known frequencies for top-n selection.
MSCG_TEN_ROWS = [
    "cat\tanimal\t500",
    "banana\tfruit\t400",
    "banana\tfood\t310",
    "strawberry\tfood\t300",
    "banana\tpotassium rich food\t200",
    "strawberry\tberry\t150",
    "strawberry\tvitamin C rich food\t120",
    "lion\tcarnivore\t100",
    "lion\tlarge and dangerous carnivore\t90",
    "strawberry\tlow-sugar berry\t80",
]

GKB_ROWS = [
    "Bananas are an important food staple in the tropics.\t0.99",
    "Coffee contains minerals and antioxidants which help prevent diabetes\t0.98",
    "Lions are dangerous animals.\t0.97",
    "Dogs have four legs.\t0.96",
    "Most wolves hunt in packs.\t0.95",
    "Blue sky.\t0.40",
]


def cslb_fixture(concepts: int = 50, properties: int = 100, per_concept: int = 3,
                 seed: int = 5):
    """A benchmark-shaped positive set: (positives, property vocabulary)."""
    rng = np.random.default_rng(seed)
    names = [f"concept{i}" for i in range(concepts)]
    props = [f"property{j}" for j in range(properties)]
    positives = []
    for c in names:
        for j in rng.choice(properties, size=per_concept, replace=False):
            positives.append((c, props[int(j)]))
    return positives, props


def write_all(outdir) -> list[str]:
    """Write every fixture file into a directory; returns the paths."""
    import os

    os.makedirs(outdir, exist_ok=True)
    written = []

    def emit(name, lines):
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(path)
        return path

    emit("strawberry_mscg.tsv", STRAWBERRY_MSCG_ROWS)
    emit("mscg_ten.tsv", MSCG_TEN_ROWS)
    emit("gkb.tsv", GKB_ROWS)

    planted = planted_dataset()
    planted_path = os.path.join(outdir, "planted_grid.tsv")
    planted.noisy.write(planted_path)
    written.append(planted_path)
    truth_path = os.path.join(outdir, "planted_truth.tsv")
    planted.truth.write(truth_path)
    written.append(truth_path)
    pairs_path = os.path.join(outdir, "planted_positive_pairs.tsv")
    positives_only(planted.noisy).write(pairs_path)
    written.append(pairs_path)
    return written


if __name__ == "__main__":  # pragma: no cover
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "fixtures"
    for p in write_all(target):
        print(p)
