import time

import numpy as np
import pytest

from propenc.corpus import PairDataset
from propenc.encoder import BiEncoder, EncoderConfig
from propenc.errors import DimensionError, IngestError, InputError
from propenc.fixtures import planted_dataset, positives_only
from propenc.modelio import load_model, read_any_embeddings, read_container, save_model
from propenc.retrieval import (
    EmbeddingMatrix,
    MipsIndex,
    Query,
    candidate_properties,
    discover_hypernyms,
    encode_matrix,
    hypernym_filter,
    neighbour_report,
    read_embeddings,
    read_text_vectors,
    write_embeddings,
)
from propenc.trainer import TrainConfig, holdout_validation, train


def brute_force_top_k(emb: EmbeddingMatrix, query, k):
    scores = emb.matrix.astype(np.float32) @ np.asarray(query, dtype=np.float32)
    order = sorted(range(emb.count), key=lambda i: (-scores[i], emb.labels[i]))
    return [(emb.labels[i], float(scores[i])) for i in order[:k]]


def random_embeddings(rng, n, d, ties=False):
    m = rng.normal(size=(n, d)).astype(np.float32)
    if ties:  # duplicate some rows so exact tie order matters
        for _ in range(max(1, n // 10)):
            i, j = rng.integers(n, size=2)
            m[i] = m[j]
    labels = [f"label{i:05d}" for i in rng.permutation(n)]
    return EmbeddingMatrix(labels, m)


# --- index exactness ------------------------------------------------------------

def test_single_row_index_always_returns_it():
    emb = EmbeddingMatrix(["only"], np.array([[1.0, 2.0]], dtype=np.float32))
    index = MipsIndex(emb)
    assert index.top_k(np.array([0.0, -1.0]), k=3) == [("only", -2.0)]


def test_orthonormal_query_finds_matching_row():
    emb = EmbeddingMatrix(["r0", "r1", "r2"], np.eye(3, dtype=np.float32))
    index = MipsIndex(emb)
    assert index.top_k(np.eye(3, dtype=np.float32)[1], k=1)[0][0] == "r1"


def test_k_larger_than_count():
    emb = EmbeddingMatrix(["a", "b"], np.eye(2, dtype=np.float32))
    assert len(MipsIndex(emb).top_k(np.ones(2, dtype=np.float32), k=10)) == 2


@pytest.mark.parametrize("ties", [False, True])
def test_top_k_matches_brute_force(ties):
    rng = np.random.default_rng(0 if not ties else 1)
    for _ in range(15):
        n = int(rng.integers(2, 1001))
        d = int(rng.integers(2, 33))
        emb = random_embeddings(rng, n, d, ties=ties)
        index = MipsIndex(emb)
        query = rng.normal(size=d).astype(np.float32)
        k = int(rng.integers(1, min(n, 20) + 1))
        assert index.top_k(query, k) == brute_force_top_k(emb, query, k)


def test_top_k_thread_count_does_not_change_results():
    rng = np.random.default_rng(3)
    emb = random_embeddings(rng, 9000, 16, ties=True)  # spans multiple blocks
    index = MipsIndex(emb)
    for trial in range(5):
        query = rng.normal(size=16).astype(np.float32)
        assert index.top_k(query, 17, threads=1) == index.top_k(query, 17, threads=8)


def test_top_k_dimension_mismatch():
    emb = EmbeddingMatrix(["a"], np.ones((1, 4), dtype=np.float32))
    with pytest.raises(DimensionError):
        MipsIndex(emb).top_k(np.ones(3, dtype=np.float32), k=1)


def test_large_index_query_under_100ms():
    rng = np.random.default_rng(4)
    emb = EmbeddingMatrix(
        [f"t{i}" for i in range(218_753)],
        rng.normal(size=(218_753, 64)).astype(np.float32),
    )
    index = MipsIndex(emb)
    query = rng.normal(size=64).astype(np.float32)
    index.top_k(query, 15)  # warm up
    start = time.perf_counter()
    index.top_k(query, 15)
    assert time.perf_counter() - start < 0.1


def test_embedding_matrix_validation():
    with pytest.raises(InputError):
        EmbeddingMatrix(["a", "a"], np.ones((2, 2), dtype=np.float32))
    with pytest.raises(DimensionError):
        EmbeddingMatrix(["a"], np.ones((2, 2), dtype=np.float32))


# --- filtering -------------------------------------------------------------------

def test_filter_removes_self_mention():
    kept = hypernym_filter("chicken", [("broiler chicken", 1.0), ("bird", 0.9)])
    assert kept == [("bird", 0.9)]


def test_filter_removes_adjective_final():
    kept = hypernym_filter("lion", [("very territorial", 1.0), ("animal", 0.9)])
    assert kept == [("animal", 0.9)]


def test_filter_keeps_valid_hypernym():
    kept = hypernym_filter("lion", [("animal", 1.0)])
    assert kept == [("animal", 1.0)]


def test_filter_token_boundaries():
    kept = hypernym_filter("cat", [("category", 1.0), ("cat food", 0.9), ("feline", 0.8)])
    assert kept == [("category", 1.0), ("feline", 0.8)]


def test_filter_preserves_order():
    candidates = [("principle", 5.0), ("notion", 4.0), ("ideal", 3.0)]
    kept = hypernym_filter("liberty", candidates)
    assert kept == [("principle", 5.0), ("notion", 4.0)]  # ideal ends in -al


def test_discover_refetches_until_k_survive():
    labels = [f"thing {i:02d}" for i in range(30)] + [f"target {i:02d}" for i in range(30)]
    rng = np.random.default_rng(5)
    matrix = rng.normal(size=(60, 8)).astype(np.float32)
    index = MipsIndex(EmbeddingMatrix(labels, matrix))
    query = Query("target", rng.normal(size=8).astype(np.float32), k=10)
    results = discover_hypernyms(index, query)
    assert len(results) == 10
    assert all("target" not in label for label, _ in results)


# --- file formats ------------------------------------------------------------------

def test_embedding_store_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    emb = random_embeddings(rng, 37, 9)
    path = tmp_path / "emb.bin"
    write_embeddings(path, emb)
    loaded = read_embeddings(path)
    assert loaded.labels == emb.labels
    assert np.array_equal(loaded.matrix, emb.matrix)


def test_embedding_store_write_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    emb = random_embeddings(rng, 10, 4)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    write_embeddings(a, emb)
    write_embeddings(b, emb)
    assert a.read_bytes() == b.read_bytes()


def test_embedding_store_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(IngestError):
        read_embeddings(path)


def test_text_vector_reader(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("apple 1.0 0.5\nbanana -0.25 2.0\n")
    emb = read_text_vectors(path)
    assert emb.labels == ["apple", "banana"]
    assert emb.dim == 2
    assert emb.vector("banana")[0] == pytest.approx(-0.25)


def test_text_vector_reader_dimension_mismatch(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("apple 1.0 0.5\nbanana 2.0\n")
    with pytest.raises(IngestError):
        read_text_vectors(path)


def test_read_any_embeddings_dispatches(tmp_path):
    rng = np.random.default_rng(8)
    emb = random_embeddings(rng, 5, 3)
    binary = tmp_path / "e.bin"
    write_embeddings(binary, emb)
    text = tmp_path / "e.txt"
    text.write_text("w 1 2 3\n")
    assert read_any_embeddings(binary).labels == emb.labels
    assert read_any_embeddings(text).labels == ["w"]


# --- model container ----------------------------------------------------------------

def small_model():
    ds = PairDataset.from_pairs([("banana", "sweet fruit"), ("lion", "fierce animal")])
    return BiEncoder.for_dataset(ds, EncoderConfig(dim=16, ffn_dim=24), seed=2)


def test_model_save_load_round_trip(tmp_path):
    model = small_model()
    path = tmp_path / "model.bin"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.vocab.tokens == model.vocab.tokens
    assert loaded.config == model.config
    assert loaded.score("banana", "sweet fruit") == model.score("banana", "sweet fruit")
    assert np.array_equal(loaded.concept_vector("lion"), model.concept_vector("lion"))


def test_container_dispatch(tmp_path):
    model = small_model()
    model_path = tmp_path / "model.bin"
    save_model(model_path, model)
    kind, payload = read_container(model_path)
    assert kind == "model"
    emb_path = tmp_path / "emb.bin"
    write_embeddings(emb_path, random_embeddings(np.random.default_rng(9), 4, 4))
    kind, payload = read_container(emb_path)
    assert kind == "embeddings"
    assert payload.count == 4


def test_load_model_rejects_embedding_file(tmp_path):
    emb_path = tmp_path / "emb.bin"
    write_embeddings(emb_path, random_embeddings(np.random.default_rng(10), 4, 4))
    with pytest.raises(IngestError):
        load_model(emb_path)


def test_container_rejects_unknown_version(tmp_path):
    import struct

    path = tmp_path / "future.bin"
    path.write_bytes(b"BIEN" + struct.pack("<HII", 9, 0, 0))
    with pytest.raises(IngestError, match="version"):
        read_container(path)


# --- neighbour report ----------------------------------------------------------------

def test_candidate_properties_frequency_floor():
    ds = PairDataset()
    for i in range(12):
        ds.add(f"c{i}", "common", "GKB")
    for i in range(10):
        ds.add(f"c{i}", "frequent", "GKB")
    ds.add("c0", "rare", "GKB")
    assert candidate_properties(ds, min_count=10) == ["common", "frequent"]


def test_neighbour_report_threshold_arithmetic():
    ds = PairDataset()
    for j, count in enumerate([12, 11, 10, 9, 3]):
        for i in range(count):
            ds.add(f"c{i}", f"prop{j}", "GKB")
    model = BiEncoder.for_dataset(ds, EncoderConfig(dim=16, ffn_dim=24), seed=0)
    results = neighbour_report(model, ds, "c0", k=10, min_count=10)
    assert len(results) == 3  # only 3 properties pass the floor


def test_neighbour_report_trained_positive_ranks_first():
    planted = planted_dataset(classes=2, concepts_per_class=6, props_per_class=3, noise=0.0)
    pairs = positives_only(planted.noisy)
    tr, va = holdout_validation(pairs, 0.15, seed=0)
    cfg = TrainConfig(concepts_per_batch=6, max_epochs=60, patience=20, seed=0)
    result = train(tr, va, cfg, encoder_config=EncoderConfig(dim=32, ffn_dim=64))
    concept = "mod0 kind0"
    listing = neighbour_report(result.model, pairs, concept, k=3, min_count=1)
    top_label = listing[0][0]
    assert planted.property_class[top_label] == planted.concept_class[concept]
    # trained model separates planted positives from planted negatives
    assert result.model.score(concept, "trait0 form0") > result.model.score(concept, "trait1 form0")


def test_encode_matrix_roles():
    model = small_model()
    emb_c = encode_matrix(model, ["banana"], "concept")
    emb_p = encode_matrix(model, ["banana"], "property")
    assert not np.allclose(emb_c.matrix, emb_p.matrix)
    with pytest.raises(InputError):
        encode_matrix(model, ["banana"], "query")
