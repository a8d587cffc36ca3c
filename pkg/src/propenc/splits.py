"""Evaluation split regimes over a labelled concept-property grid.

Three regimes: hold out concepts (one fold, optionally from a fixed
published assignment), hold out properties (5-fold), or hold out both
(3x3 partitions, nine folds, trained on the complement block and tested
on the held-out block). Plans serialize to JSON lines carrying only the
regime, fold index, seed and test id lists, so identical folds can be
reconstructed by every consumer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, InputError

REGIME_CON = "CON"
REGIME_PROP = "PROP"
REGIME_CON_PROP = "CON_PROP"


@dataclass(frozen=True)
class LabelledPair:
    concept: str
    property: str
    label: bool


class LabelledDataset:
    """A labelled grid: one boolean label per (concept, property) pair."""

    def __init__(self, pairs=()):
        self._labels: dict[tuple[str, str], bool] = {}
        for pair in pairs:
            self.add(pair.concept, pair.property, pair.label)

    def add(self, concept: str, property: str, label: bool) -> None:
        key = (concept, property)
        if key in self._labels:
            raise InputError(f"duplicate labelled pair {key}")
        self._labels[key] = bool(label)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, key) -> bool:
        return key in self._labels

    def label(self, concept: str, property: str) -> bool:
        return self._labels[(concept, property)]

    def pairs(self) -> list[LabelledPair]:
        return [LabelledPair(c, p, l) for (c, p), l in sorted(self._labels.items())]

    def concepts(self) -> list[str]:
        return sorted({c for c, _ in self._labels})

    def properties(self) -> list[str]:
        return sorted({p for _, p in self._labels})

    def positives(self) -> list[tuple[str, str]]:
        return [k for k, l in sorted(self._labels.items()) if l]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for (c, p), label in sorted(self._labels.items()):
                fh.write(f"{c}\t{p}\t{int(label)}\n")

    @classmethod
    def read(cls, path) -> "LabelledDataset":
        ds = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 3 or fields[2] not in ("0", "1"):
                    raise InputError(f"{path}:{lineno}: expected concept<TAB>property<TAB>0|1")
                ds.add(fields[0], fields[1], fields[2] == "1")
        return ds


@dataclass
class Fold:
    index: int
    test_concepts: list[str]
    test_properties: list[str]

    def train_pairs(self, data: LabelledDataset, regime: str) -> list[LabelledPair]:
        cset, pset = set(self.test_concepts), set(self.test_properties)
        if regime == REGIME_CON:
            return [x for x in data.pairs() if x.concept not in cset]
        if regime == REGIME_PROP:
            return [x for x in data.pairs() if x.property not in pset]
        return [x for x in data.pairs() if x.concept not in cset and x.property not in pset]

    def test_pairs(self, data: LabelledDataset, regime: str) -> list[LabelledPair]:
        cset, pset = set(self.test_concepts), set(self.test_properties)
        if regime == REGIME_CON:
            return [x for x in data.pairs() if x.concept in cset]
        if regime == REGIME_PROP:
            return [x for x in data.pairs() if x.property in pset]
        return [x for x in data.pairs() if x.concept in cset and x.property in pset]


@dataclass
class SplitPlan:
    regime: str
    seed: int
    folds: list[Fold] = field(default_factory=list)

    def check_invariants(self, data: LabelledDataset) -> None:
        """Re-assert the regime's structural guarantees from the plan alone."""
        if self.regime == REGIME_CON:
            for fold in self.folds:
                train = {x.concept for x in fold.train_pairs(data, self.regime)}
                if train & set(fold.test_concepts):
                    raise DatasetError(f"fold {fold.index}: concept leaks into training")
        elif self.regime == REGIME_PROP:
            if len(self.folds) != 5:
                raise DatasetError("property regime requires exactly 5 folds")
            seen: list[str] = []
            for fold in self.folds:
                train = {x.property for x in fold.train_pairs(data, self.regime)}
                if train & set(fold.test_properties):
                    raise DatasetError(f"fold {fold.index}: property leaks into training")
                seen.extend(fold.test_properties)
            if sorted(seen) != data.properties():
                raise DatasetError("test property sets do not partition the properties")
        elif self.regime == REGIME_CON_PROP:
            if len(self.folds) != 9:
                raise DatasetError("concept+property regime requires exactly 9 folds")
            cells = set()
            for fold in self.folds:
                cells.add((tuple(sorted(fold.test_concepts)), tuple(sorted(fold.test_properties))))
                for x in fold.train_pairs(data, self.regime):
                    if x.concept in set(fold.test_concepts) or x.property in set(fold.test_properties):
                        raise DatasetError(f"fold {fold.index}: test entity leaks into training")
            if len(cells) != 9:
                raise DatasetError("the nine folds do not enumerate all partition cells")
        else:
            raise InputError(f"unknown regime {self.regime!r}")

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for fold in self.folds:
                record = {
                    "regime": self.regime,
                    "fold": fold.index,
                    "seed": self.seed,
                    "test_concepts": fold.test_concepts,
                    "test_properties": fold.test_properties,
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "SplitPlan":
        folds = []
        regime = None
        seed = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if regime is None:
                    regime, seed = record["regime"], record["seed"]
                elif record["regime"] != regime or record["seed"] != seed:
                    raise InputError(f"{path}: mixed regimes or seeds in one plan")
                folds.append(
                    Fold(record["fold"], list(record["test_concepts"]), list(record["test_properties"]))
                )
        if regime is None:
            raise InputError(f"{path}: empty plan file")
        folds.sort(key=lambda f: f.index)
        return cls(regime, seed, folds)


def _partition(items: list[str], parts: int, rng: np.random.Generator) -> list[list[str]]:
    # earlier parts absorb the remainder so sizes differ by at most one
    order = [items[i] for i in rng.permutation(len(items))]
    base, extra = divmod(len(items), parts)
    out, at = [], 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        out.append(order[at:at + size])
        at += size
    return out


def read_fixed_concept_split(path) -> tuple[list[str], list[str]]:
    """Read a published fixed split: ``train|test<TAB>concept`` lines."""
    train, test = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2 or fields[0] not in ("train", "test"):
                raise InputError(f"{path}:{lineno}: expected train|test<TAB>concept")
            (train if fields[0] == "train" else test).append(fields[1])
    return train, test


def build_con_split(
    data: LabelledDataset,
    seed: int = 0,
    fixed: tuple[list[str], list[str]] | None = None,
    test_fraction: float = 0.1,
) -> SplitPlan:
    """One fold holding out whole concepts.

    With a fixed assignment the two lists are used verbatim and must
    partition the dataset's concepts; otherwise a seeded sample holds out
    test_fraction of the concepts.
    """
    concepts = data.concepts()
    if fixed is not None:
        train_c, test_c = fixed
        known = set(concepts)
        for name in list(train_c) + list(test_c):
            if name not in known:
                raise InputError(f"fixed split names unknown concept {name!r}")
        if sorted(train_c + test_c) != concepts or set(train_c) & set(test_c):
            raise InputError("fixed split must partition the dataset's concepts")
        test = sorted(test_c)
    else:
        rng = np.random.default_rng(seed)
        n_test = max(1, int(round(len(concepts) * test_fraction)))
        if n_test >= len(concepts):
            raise InputError("test fraction leaves no training concepts")
        order = rng.permutation(len(concepts))
        test = sorted(concepts[i] for i in order[:n_test])
    return SplitPlan(REGIME_CON, seed, [Fold(0, test, [])])


def build_prop_split(data: LabelledDataset, folds: int = 5, seed: int = 0) -> SplitPlan:
    """K-fold cross-validation over properties (default 5)."""
    properties = data.properties()
    if len(properties) < folds:
        raise InputError(f"need at least {folds} properties, got {len(properties)}")
    rng = np.random.default_rng(seed)
    parts = _partition(properties, folds, rng)
    return SplitPlan(
        REGIME_PROP,
        seed,
        [Fold(i, [], sorted(part)) for i, part in enumerate(parts)],
    )


def build_con_prop_split(data: LabelledDataset, seed: int = 0) -> SplitPlan:
    """Nine folds from 3-way partitions of both concepts and properties.

    Fold (i, j) tests on the i-th concept part crossed with the j-th
    property part and trains on the complement block; pairs touching
    exactly one of the two held-out parts are used in neither.
    """
    concepts, properties = data.concepts(), data.properties()
    if len(concepts) < 3 or len(properties) < 3:
        raise InputError("need at least 3 concepts and 3 properties")
    rng = np.random.default_rng(seed)
    c_parts = _partition(concepts, 3, rng)
    p_parts = _partition(properties, 3, rng)
    folds = []
    for i in range(3):
        for j in range(3):
            folds.append(Fold(3 * i + j, sorted(c_parts[i]), sorted(p_parts[j])))
    return SplitPlan(REGIME_CON_PROP, seed, folds)


def sample_negatives(
    positives: list[tuple[str, str]],
    properties: list[str],
    ratio: int = 20,
    seed: int = 0,
) -> LabelledDataset:
    """Labelled dataset with `ratio` sampled negatives per positive.

    For each concept, negatives are drawn uniformly without replacement
    from the properties that are not among the concept's positives, so a
    generated negative can never collide with a known positive and the
    negative:positive ratio is exactly `ratio`:1.
    """
    properties = sorted(set(properties))
    if len(properties) <= ratio:
        raise InputError(f"need more than {ratio} properties to sample negatives")
    by_concept: dict[str, list[str]] = {}
    for c, p in sorted(positives):
        by_concept.setdefault(c, []).append(p)
    rng = np.random.default_rng(seed)
    out = LabelledDataset()
    for c, pos in by_concept.items():
        pos_set = set(pos)
        candidates = [p for p in properties if p not in pos_set]
        need = ratio * len(pos)
        if len(candidates) < need:
            raise DatasetError(
                f"concept {c!r} has only {len(candidates)} candidate properties, needs {need}"
            )
        picked = rng.choice(len(candidates), size=need, replace=False)
        for p in pos:
            out.add(c, p, True)
        for idx in picked:
            out.add(c, candidates[idx], False)
    return out
