"""Concept-property pair datasets and their derivation from raw corpora.

Three derivations are supported: top-N scored hypernym triples, the
adjectival-prefix heuristic that mines properties out of nested hypernyms,
and the conversion of short generic sentences into (subject, predicate)
pairs. All of them produce the same canonical pair dataset, which carries
per-source provenance and is serialized as a TSV file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import IngestError, InputError
from .lexicon import (
    ADJECTIVE_LITERALS,
    ADJECTIVE_SUFFIXES,
    ADJECTIVES,
    DETERMINERS,
    IRREGULAR_PLURALS,
    NOUN_OVERRIDES,
    VERBS,
)

SOURCE_MSCG = "MSCG"
SOURCE_PREFIX = "PREFIX"
SOURCE_GKB = "GKB"
SOURCE_BENCHMARK = "BENCHMARK"

_WS = re.compile(r"\s+")

COPULAS = frozenset({"is", "are", "was", "were"})
PREDICATE_VERBS = frozenset({"has", "have", "contains", "contain", "requires", "require"})
_DROPPED_ARTICLES = frozenset({"a", "an"})
_SUBJECT_DETERMINERS = frozenset({"a", "an", "the"})


def normalize(text: str) -> str:
    """Lowercase and collapse whitespace; idempotent."""
    return _WS.sub(" ", text.strip().lower())


def tokenize(text: str) -> list[str]:
    norm = normalize(text)
    return norm.split(" ") if norm else []


def singularize(word: str) -> str:
    """Rule-based singular form with an irregular-noun exception table."""
    if word in IRREGULAR_PLURALS:
        return IRREGULAR_PLURALS[word]
    if len(word) > 4 and word.endswith("ies"):
        return word[:-3] + "y"
    for suffix in ("ches", "shes", "sses", "xes", "zes"):
        if word.endswith(suffix):
            return word[:-2]
    if word.endswith("ss") or word.endswith("us") or word.endswith("is"):
        return word
    if len(word) > 3 and word.endswith("s"):
        return word[:-1]
    return word


def _adjectival_token(token: str) -> bool:
    if token in ADJECTIVES or token in ADJECTIVE_LITERALS:
        return True
    if token in NOUN_OVERRIDES:
        return False
    if any(token.endswith(s) for s in ADJECTIVE_SUFFIXES):
        return True
    if "-" in token:
        parts = [p for p in token.split("-") if p]
        if parts and (_adjectival_token(parts[0]) or _adjectival_token(parts[-1])):
            return True
    return False


def is_adjectival(phrase: str) -> bool:
    """Whether a phrase plausibly names a property rather than a kind.

    True iff the final token looks adjectival (lexicon membership, an
    adjectival suffix, or an adjectival hyphen compound) and the phrase
    contains no determiner and no verb-lexicon token.
    """
    tokens = tokenize(phrase)
    if not tokens:
        raise InputError("is_adjectival needs a non-empty phrase")
    if any(t in DETERMINERS or t in VERBS for t in tokens):
        return False
    return _adjectival_token(tokens[-1])


@dataclass(frozen=True)
class ConceptPropertyPair:
    concept: str
    property: str
    source: str
    weight: float = 1.0


@dataclass
class IngestReport:
    rows_read: int = 0
    malformed: int = 0
    skipped_length: int = 0
    skipped_pattern: int = 0
    excluded: int = 0
    emitted: int = 0

    def as_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "malformed": self.malformed,
            "skipped_length": self.skipped_length,
            "skipped_pattern": self.skipped_pattern,
            "excluded": self.excluded,
            "emitted": self.emitted,
        }


class PairDataset:
    """A set of positive concept-property pairs with per-source provenance.

    The concept and property vocabularies are projections of the pair set
    and are recomputed on demand, never stored.
    """

    def __init__(self):
        self._pairs: dict[tuple[str, str], tuple[set[str], float]] = {}

    def add(self, concept: str, property: str, source: str, weight: float = 1.0) -> None:
        concept = normalize(concept)
        property = normalize(property)
        if not concept or not property:
            raise InputError("concept and property must be non-empty")
        entry = self._pairs.get((concept, property))
        if entry is None:
            self._pairs[(concept, property)] = ({source}, float(weight))
        else:
            entry[0].add(source)
            self._pairs[(concept, property)] = (entry[0], max(entry[1], float(weight)))

    def __len__(self) -> int:
        return len(self._pairs)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self._pairs

    def pairs(self) -> list[ConceptPropertyPair]:
        out = []
        for (c, p) in sorted(self._pairs):
            sources, weight = self._pairs[(c, p)]
            for s in sorted(sources):
                out.append(ConceptPropertyPair(c, p, s, weight))
        return out

    def pair_keys(self) -> list[tuple[str, str]]:
        return sorted(self._pairs)

    def concepts(self) -> list[str]:
        return sorted({c for c, _ in self._pairs})

    def properties(self) -> list[str]:
        return sorted({p for _, p in self._pairs})

    def positives_by_concept(self) -> dict[str, list[str]]:
        by_concept: dict[str, list[str]] = {}
        for c, p in sorted(self._pairs):
            by_concept.setdefault(c, []).append(p)
        return by_concept

    def property_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, p in self._pairs:
            counts[p] = counts.get(p, 0) + 1
        return counts

    @classmethod
    def from_pairs(cls, pairs, source: str = SOURCE_BENCHMARK) -> "PairDataset":
        ds = cls()
        for c, p in pairs:
            ds.add(c, p, source)
        return ds

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for (c, p) in sorted(self._pairs):
                sources, weight = self._pairs[(c, p)]
                fh.write(f"{c}\t{p}\t{','.join(sorted(sources))}\t{weight:g}\n")

    @classmethod
    def read(cls, path) -> "PairDataset":
        ds = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 4:
                    raise IngestError(f"{path}:{lineno}: expected 4 tab-separated fields")
                c, p, sources, weight = fields
                for s in sources.split(","):
                    ds.add(c, p, s, float(weight))
        return ds


def select_mscg(rows, n: int, exclude: PairDataset | None = None) -> tuple[PairDataset, IngestReport]:
    """Top-n concept-hypernym pairs by relation frequency.

    Rows are ``concept<TAB>hypernym<TAB>frequency`` lines. Ties are broken
    by the lexicographic (concept, hypernym) order, which makes the
    selection invariant to input row permutation. Malformed rows are
    skipped and counted; more than 10% malformed aborts the ingest.

    Passing the training selection as `exclude` yields the next-n most
    confident pairs instead, guaranteed disjoint from it (validation
    construction).
    """
    report = IngestReport()
    best: dict[tuple[str, str], float] = {}
    for line in rows:
        line = line.rstrip("\n")
        if not line:
            continue
        report.rows_read += 1
        fields = line.split("\t")
        if len(fields) != 3:
            report.malformed += 1
            continue
        concept, hypernym, freq_text = fields
        concept = normalize(concept)
        hypernym = normalize(hypernym)
        try:
            freq = float(freq_text)
        except ValueError:
            report.malformed += 1
            continue
        if not concept or not hypernym:
            report.malformed += 1
            continue
        key = (concept, hypernym)
        if key not in best or freq > best[key]:
            best[key] = freq
    if report.rows_read and report.malformed > 0.1 * report.rows_read:
        raise IngestError(
            f"{report.malformed} of {report.rows_read} rows malformed (>10%)"
        )
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    ds = PairDataset()
    for (concept, hypernym), freq in ranked:
        if len(ds) >= n:
            break
        if exclude is not None and (concept, hypernym) in exclude:
            report.excluded += 1
            continue
        ds.add(concept, hypernym, SOURCE_MSCG, freq)
    report.emitted = len(ds)
    return ds, report


def derive_prefix(mscg: PairDataset) -> PairDataset:
    """Mine (concept, modifier) pairs from nested hypernyms.

    For hypernyms h1 and h2 of the same concept where h2 is a proper
    token-suffix of h1, the leading remainder is emitted as a property of
    the concept when it passes the adjectival test.
    """
    out = PairDataset()
    for concept, hypernyms in mscg.positives_by_concept().items():
        token_lists = {h: h.split(" ") for h in hypernyms}
        suffixes = {tuple(t) for t in token_lists.values()}
        for h1, tokens in token_lists.items():
            for cut in range(1, len(tokens)):
                if tuple(tokens[cut:]) in suffixes:
                    remainder = " ".join(tokens[:cut])
                    if is_adjectival(remainder):
                        out.add(concept, remainder, SOURCE_PREFIX)
    return out


def _strip_terminal_punct(sentence: str) -> str:
    return sentence.strip().rstrip(".!?").strip()


def _convert_generic(tokens: list[str]) -> tuple[str, str] | None:
    verb_idx = None
    is_copula = False
    for i in range(1, len(tokens)):
        if tokens[i] in COPULAS:
            verb_idx, is_copula = i, True
            break
        if tokens[i] in PREDICATE_VERBS:
            verb_idx, is_copula = i, False
            break
    if verb_idx is None:
        return None
    subject = list(tokens[:verb_idx])
    while subject and subject[0] in _SUBJECT_DETERMINERS:
        subject.pop(0)
    predicate = list(tokens[verb_idx + 1:])
    if is_copula and predicate and predicate[0] in _DROPPED_ARTICLES:
        predicate.pop(0)
    if not subject or not predicate:
        return None
    subject[-1] = singularize(subject[-1])
    return " ".join(subject), " ".join(predicate)


def derive_gkb(rows, n: int, max_len: int = 7,
               exclude: PairDataset | None = None) -> tuple[PairDataset, IngestReport]:
    """Concept-property pairs from scored generic sentences.

    Rows are ``sentence<TAB>confidence`` lines. Sentences longer than
    max_len whitespace tokens (terminal punctuation stripped) are dropped;
    the remainder is processed in descending confidence order and a pair
    is emitted per sentence matching ``<subject> <copula|verb> <predicate>``
    until n pairs are collected. A leading article after a copula is
    dropped, matching how generics state properties.

    As with the hypernym selection, passing the training selection as
    `exclude` continues down the confidence order and collects the next n
    pairs disjoint from it.
    """
    report = IngestReport()
    kept: list[tuple[float, str, list[str]]] = []
    for line in rows:
        line = line.rstrip("\n")
        if not line:
            continue
        report.rows_read += 1
        fields = line.split("\t")
        if len(fields) != 2:
            report.malformed += 1
            continue
        sentence, conf_text = fields
        try:
            conf = float(conf_text)
        except ValueError:
            report.malformed += 1
            continue
        tokens = tokenize(_strip_terminal_punct(sentence))
        if not tokens:
            report.malformed += 1
            continue
        if len(tokens) > max_len:
            report.skipped_length += 1
            continue
        kept.append((conf, " ".join(tokens), tokens))
    kept.sort(key=lambda item: (-item[0], item[1]))
    ds = PairDataset()
    for conf, _, tokens in kept:
        if len(ds) >= n:
            break
        converted = _convert_generic(tokens)
        if converted is None:
            report.skipped_pattern += 1
            continue
        subject, predicate = converted
        if exclude is not None and (subject, predicate) in exclude:
            report.excluded += 1
            continue
        ds.add(subject, predicate, SOURCE_GKB, conf)
    report.emitted = len(ds)
    return ds, report


def merge(datasets) -> PairDataset:
    """Set union of pair datasets; overlapping pairs keep every source."""
    out = PairDataset()
    for ds in datasets:
        for pair in ds.pairs():
            out.add(pair.concept, pair.property, pair.source, pair.weight)
    return out
