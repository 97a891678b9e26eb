from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from telerag.embed import cosine_similarity
from telerag.errors import DimensionMismatchError, DuplicateChunkError, StoreFormatError
from telerag.vstore import VectorRecord, VectorStore


def random_store(n: int, dims: int, seed: int, fingerprint: str = "hash-test:seed-0:0"):
    rng = np.random.default_rng(seed)
    store = VectorStore(dims=dims, provider_fingerprint=fingerprint)
    vectors = {}
    for i in range(n):
        vec = rng.normal(size=dims).astype(np.float32)
        chunk_id = f"c{i:05d}"
        store.insert(VectorRecord(chunk_id=chunk_id, embedding=vec))
        vectors[chunk_id] = vec
    return store, vectors


def brute_force_top_k(vectors: dict[str, np.ndarray], query: np.ndarray, k: int):
    # Independent oracle: full sort over per-record cosine, same tie-break rule.
    scored = [(cosine_similarity(vec, query), chunk_id) for chunk_id, vec in vectors.items()]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [chunk_id for _, chunk_id in scored[:k]]


def test_self_retrieval_scores_one():
    store, vectors = random_store(5, 16, seed=1)
    hits = store.search(vectors["c00003"], k=1)
    assert hits[0].chunk_id == "c00003"
    assert hits[0].score == pytest.approx(1.0, abs=1e-12)
    assert hits[0].rank == 1


def test_duplicate_id_rejected_size_unchanged():
    store, vectors = random_store(3, 8, seed=2)
    with pytest.raises(DuplicateChunkError):
        store.insert(VectorRecord(chunk_id="c00001", embedding=vectors["c00002"]))
    assert len(store) == 3


def test_dimension_mismatch_rejected():
    store = VectorStore(dims=16, provider_fingerprint="fp")
    with pytest.raises(DimensionMismatchError):
        store.insert(VectorRecord(chunk_id="x", embedding=np.ones(8, dtype=np.float32)))
    store.insert(VectorRecord(chunk_id="x", embedding=np.ones(16, dtype=np.float32)))
    with pytest.raises(DimensionMismatchError):
        store.search(np.ones(8), k=1)


def test_k_clamped_to_store_size():
    store, vectors = random_store(3, 8, seed=3)
    hits = store.search(vectors["c00000"], k=10)
    assert len(hits) == 3
    assert [h.rank for h in hits] == [1, 2, 3]


def test_search_matches_brute_force_oracle():
    store, vectors = random_store(100, 24, seed=4)
    rng = np.random.default_rng(99)
    for _ in range(10):
        query = rng.normal(size=24)
        hits = store.search(query, k=5)
        assert [h.chunk_id for h in hits] == brute_force_top_k(vectors, query, 5)


def test_equal_scores_tie_break_lexicographic():
    store = VectorStore(dims=4, provider_fingerprint="fp")
    vec = np.array([0.5, 0.5, 0.0, 0.0], dtype=np.float32)
    store.insert(VectorRecord(chunk_id="zzz", embedding=vec))
    store.insert(VectorRecord(chunk_id="aaa", embedding=2 * vec))
    hits = store.search(vec, k=2)
    assert [h.chunk_id for h in hits] == ["aaa", "zzz"]


def test_scores_monotone_nonincreasing():
    store, vectors = random_store(50, 12, seed=5)
    hits = store.search(vectors["c00000"], k=50)
    for first, second in zip(hits, hits[1:]):
        assert first.score >= second.score


def test_insertion_order_independence():
    rng = np.random.default_rng(6)
    records = [
        VectorRecord(chunk_id=f"r{i}", embedding=rng.normal(size=8).astype(np.float32))
        for i in range(30)
    ]
    query = rng.normal(size=8)
    forward = VectorStore(dims=8, provider_fingerprint="fp")
    backward = VectorStore(dims=8, provider_fingerprint="fp")
    for rec in records:
        forward.insert(rec)
    for rec in reversed(records):
        backward.insert(rec)
    assert forward.search(query, k=10) == backward.search(query, k=10)


def test_empty_store_search_returns_empty():
    store = VectorStore(dims=8, provider_fingerprint="fp")
    assert store.search(np.ones(8), k=3) == []


def test_save_load_round_trip_empty(tmp_path):
    store = VectorStore(dims=8, provider_fingerprint="hash-test:seed-0:8")
    path = tmp_path / "empty.vdb"
    store.save(path)
    loaded = VectorStore.load(path)
    assert len(loaded) == 0
    assert loaded.dims == 8
    assert loaded.provider_fingerprint == "hash-test:seed-0:8"


def test_save_load_round_trip_search_identical(tmp_path):
    store, _ = random_store(1000, 32, seed=7)
    path = tmp_path / "big.vdb"
    store.save(path)
    loaded = VectorStore.load(path)
    rng = np.random.default_rng(8)
    for _ in range(20):
        query = rng.normal(size=32)
        assert store.search(query, k=7) == loaded.search(query, k=7)


def test_save_is_byte_canonical(tmp_path):
    rng = np.random.default_rng(9)
    records = [
        VectorRecord(chunk_id=f"r{i}", embedding=rng.normal(size=6).astype(np.float32))
        for i in range(20)
    ]
    a = VectorStore(dims=6, provider_fingerprint="fp")
    b = VectorStore(dims=6, provider_fingerprint="fp")
    for rec in records:
        a.insert(rec)
    for rec in reversed(records):
        b.insert(rec)
    path_a, path_b, path_c = (tmp_path / n for n in ("a.vdb", "b.vdb", "c.vdb"))
    a.save(path_a)
    b.save(path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    VectorStore.load(path_a).save(path_c)
    assert path_c.read_bytes() == path_a.read_bytes()


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.vdb"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(StoreFormatError):
        VectorStore.load(path)


def test_load_rejects_truncation_and_trailing(tmp_path):
    store, _ = random_store(5, 8, seed=10)
    path = tmp_path / "s.vdb"
    store.save(path)
    blob = path.read_bytes()
    truncated = tmp_path / "t.vdb"
    truncated.write_bytes(blob[:-3])
    with pytest.raises(StoreFormatError):
        VectorStore.load(truncated)
    padded = tmp_path / "p.vdb"
    padded.write_bytes(blob + b"xx")
    with pytest.raises(StoreFormatError):
        VectorStore.load(padded)


def test_read_header(tmp_path):
    store, _ = random_store(5, 8, seed=11, fingerprint="hash-test:seed-3:8")
    path = tmp_path / "s.vdb"
    store.save(path)
    version, dims, count, fingerprint = VectorStore.read_header(path)
    assert (version, dims, count, fingerprint) == (1, 8, 5, "hash-test:seed-3:8")


def test_concurrent_readers_get_identical_results():
    store, _ = random_store(200, 16, seed=12)
    query = np.random.default_rng(13).normal(size=16)
    expected = store.search(query, k=5)
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda _: store.search(query, k=5), range(16)))
    assert all(res == expected for res in results)


def test_search_k_validation():
    store, vectors = random_store(3, 8, seed=14)
    with pytest.raises(ValueError):
        store.search(vectors["c00000"], k=0)


def test_random_sized_stores_match_oracle():
    rng = random.Random(15)
    for case in range(40):
        n = rng.randint(1, 60)
        dims = rng.randint(2, 48)
        store, vectors = random_store(n, dims, seed=1000 + case)
        query = np.random.default_rng(2000 + case).normal(size=dims)
        k = rng.randint(1, 8)
        hits = store.search(query, k=k)
        assert [h.chunk_id for h in hits] == brute_force_top_k(vectors, query, k)
        assert [h.rank for h in hits] == list(range(1, len(hits) + 1))
