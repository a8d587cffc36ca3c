"""Embedding store, exact maximum-inner-product search, and discovery filters.

The index is a block-contiguous float32 matrix scanned exactly (no
approximation); top-k selection orders by descending inner product with
lexicographic label tie-breaks, so results are reproducible bit-for-bit
regardless of how many threads scan the blocks.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import is_adjectival, tokenize
from .errors import DimensionError, IngestError, InputError

MAGIC = b"BIEN"
EMBEDDING_VERSION = 1
_BLOCK_ROWS = 4096


class EmbeddingMatrix:
    """Unit-role vectors keyed by unique string labels, one row per label."""

    def __init__(self, labels, matrix, source: str = ""):
        labels = list(labels)
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(labels):
            raise DimensionError(
                f"matrix shape {matrix.shape} does not match {len(labels)} labels"
            )
        if len(set(labels)) != len(labels):
            raise InputError("labels must be unique")
        self.labels = labels
        self.matrix = matrix
        self.source = source
        self._index = {label: i for i, label in enumerate(labels)}

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def vector(self, label: str) -> np.ndarray:
        return self.matrix[self._index[label]]


def write_embeddings(path, emb: EmbeddingMatrix) -> None:
    """Binary store: BIEN magic, u16 version, u32 count, u32 dim,
    length-prefixed UTF-8 labels, then count*dim little-endian float32."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HII", EMBEDDING_VERSION, emb.count, emb.dim))
        for label in emb.labels:
            raw = label.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(emb.matrix, dtype="<f4").tobytes())


def _read_labels(fh, count: int) -> list[str]:
    labels = []
    for _ in range(count):
        (n,) = struct.unpack("<H", fh.read(2))
        labels.append(fh.read(n).decode("utf-8"))
    return labels


def read_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise IngestError(f"{path}: not an embedding store (bad magic)")
        version, count, dim = struct.unpack("<HII", fh.read(10))
        if version != EMBEDDING_VERSION:
            raise IngestError(f"{path}: unsupported embedding store version {version}")
        labels = _read_labels(fh, count)
        data = np.frombuffer(fh.read(count * dim * 4), dtype="<f4")
        if data.size != count * dim:
            raise IngestError(f"{path}: truncated vector section")
    return EmbeddingMatrix(labels, data.reshape(count, dim).astype(np.float32))


def read_text_vectors(path) -> EmbeddingMatrix:
    """Plain-text word vectors: label then d decimal floats per line."""
    labels, rows = [], []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise IngestError(f"{path}:{lineno}: no vector components")
            if len(parts) - 1 != dim:
                raise IngestError(f"{path}:{lineno}: expected {dim} components")
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
            labels.append(parts[0])
    if not labels:
        raise IngestError(f"{path}: empty vector file")
    return EmbeddingMatrix(labels, np.array(rows, dtype=np.float32))


@dataclass
class Query:
    term: str
    vector: np.ndarray
    k: int = 15
    filter_candidates: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be at least 1")


class MipsIndex:
    """Exact inner-product search over an immutable embedding matrix."""

    def __init__(self, emb: EmbeddingMatrix):
        if emb.count < 1:
            raise InputError("cannot index an empty embedding matrix")
        self._matrix = np.ascontiguousarray(emb.matrix, dtype=np.float32)
        self._labels = list(emb.labels)

    @property
    def count(self) -> int:
        return self._matrix.shape[0]

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    def _select(self, scores: np.ndarray, offset: int, k: int) -> list[int]:
        # exact top-k under the (-score, label) order, ties resolved by label
        n = scores.shape[0]
        if k >= n:
            picked = range(n)
        else:
            part = np.argpartition(-scores, k - 1)[:k]
            floor = scores[part].min()
            sure = np.flatnonzero(scores > floor)
            tied = np.flatnonzero(scores == floor)
            need = k - sure.size
            tied = sorted(tied, key=lambda i: self._labels[offset + i])[:need]
            picked = list(sure) + list(tied)
        return sorted(picked, key=lambda i: (-scores[i], self._labels[offset + i]))[:k]

    def top_k(self, query: np.ndarray, k: int, threads: int = 1) -> list[tuple[str, float]]:
        """The k labels with the largest inner product, descending.

        The scan is blocked over fixed row ranges; with threads > 1 the
        blocks are searched concurrently and merged, which cannot change
        the result because block boundaries do not depend on thread count.
        """
        query = np.asarray(query, dtype=np.float32)
        if query.shape != (self.dim,):
            raise DimensionError(f"query shape {query.shape} does not match dim {self.dim}")
        k = min(k, self.count)
        if k < 1:
            raise InputError("k must be at least 1")
        blocks = [(start, min(start + _BLOCK_ROWS, self.count))
                  for start in range(0, self.count, _BLOCK_ROWS)]

        def scan(block):
            start, stop = block
            scores = self._matrix[start:stop] @ query
            return [(start + i, float(scores[i])) for i in self._select(scores, start, k)]

        if threads > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_block = list(pool.map(scan, blocks))
        else:
            per_block = [scan(b) for b in blocks]
        merged = [item for block in per_block for item in block]
        merged.sort(key=lambda pair: (-pair[1], self._labels[pair[0]]))
        return [(self._labels[i], score) for i, score in merged[:k]]


def hypernym_filter(target: str, candidates, adjectival=is_adjectival):
    """Drop self-mentions and adjective-final candidates, preserving order.

    A candidate is a self-mention when the target's token sequence occurs
    contiguously (case-folded, on token boundaries) inside the candidate.
    """
    target_tokens = tokenize(target)
    span = len(target_tokens)

    def mentions_target(tokens):
        return span > 0 and any(
            tokens[i:i + span] == target_tokens for i in range(len(tokens) - span + 1)
        )

    kept = []
    for item in candidates:
        label = item[0] if isinstance(item, tuple) else item
        tokens = tokenize(label)
        if not tokens or mentions_target(tokens):
            continue
        if adjectival(tokens[-1]):
            continue
        kept.append(item)
    return kept


def discover_hypernyms(index: MipsIndex, query: Query) -> list[tuple[str, float]]:
    """Ranked hypernym candidates for a target term.

    Retrieves enough raw neighbours that `k` candidates survive the
    self-mention and adjective filters (when filtering is enabled).
    """
    fetch = query.k
    while True:
        fetch = min(max(fetch * 2, query.k + 8), index.count)
        ranked = index.top_k(query.vector, fetch)
        kept = hypernym_filter(query.term, ranked) if query.filter_candidates else ranked
        if len(kept) >= query.k or fetch >= index.count:
            return kept[:query.k]


def encode_matrix(model, labels, role: str) -> EmbeddingMatrix:
    """Encode a label list with one tower of a bi-encoder model."""
    if role not in ("concept", "property"):
        raise InputError(f"role must be concept or property, got {role!r}")
    encode = model.concept_vector if role == "concept" else model.property_vector
    rows = np.stack([encode(label) for label in labels]) if labels else np.zeros((0, model.config.dim))
    return EmbeddingMatrix(list(labels), rows, source=f"bi-encoder/{role}")


def candidate_properties(pair_dataset, min_count: int = 10) -> list[str]:
    """Properties occurring at least min_count times in a pair corpus."""
    return sorted(p for p, n in pair_dataset.property_counts().items() if n >= min_count)


def neighbour_report(model, pair_dataset, concept: str, k: int = 7,
                     min_count: int = 10) -> list[tuple[str, float]]:
    """Top-k properties by inner product with the concept's vector.

    The candidate set is the pair corpus's properties above the frequency
    floor; the listing is qualitative and deliberately unfiltered.
    """
    candidates = candidate_properties(pair_dataset, min_count)
    if not candidates:
        raise InputError(f"no properties occur at least {min_count} times")
    emb = encode_matrix(model, candidates, "property")
    index = MipsIndex(emb)
    return index.top_k(model.concept_vector(concept), k)
