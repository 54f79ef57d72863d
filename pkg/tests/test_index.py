import numpy as np
import pytest

from intentrag.corpus import Chunk
from intentrag.embedding import (
    DeterministicMockEmbedder,
    EmbeddingProviderConfig,
    EmbeddingVector,
)
from intentrag.errors import (
    DimensionMismatchError,
    IndexFormatError,
    UnsupportedVersionError,
    ValidationError,
)
from intentrag.index import (
    ChunkRef,
    VectorIndex,
    build_index,
    dumps_index,
    load_index,
    loads_index,
    save_index,
    search,
)


def make_chunk(cid, body, doc=None, ordinal=0):
    doc = doc or cid.split("#")[0]
    return Chunk(id=cid, doc_id=doc, ordinal=ordinal, body=body,
                 char_span=(0, len(body)))


def hand_index():
    matrix = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]], dtype=np.float32)
    return VectorIndex(2, ["c1", "c2", "c3"], matrix)


def brute_force_top_k(index, query, top_k):
    """Independent oracle: per-chunk cosine in float64, full sort."""
    q = np.asarray(query.values, dtype=np.float64)
    q = q / np.linalg.norm(q)
    scored = []
    for i, cid in enumerate(index.ids):
        row = index.matrix[i].astype(np.float64)
        scored.append((cid, float(np.sum(row * q) / np.linalg.norm(row))))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:top_k]


class TestBuildIndex:
    def test_three_chunks(self):
        provider = DeterministicMockEmbedder(EmbeddingProviderConfig(dim=16))
        chunks = [make_chunk(f"d{i}#0", f"body text number {i}") for i in range(3)]
        index = build_index(chunks, provider)
        assert len(index) == 3
        assert index.dim == 16
        assert index.metadata["d0#0"] == ChunkRef("d0", 0)

    def test_duplicate_id_fails_before_embedding(self):
        calls = {"n": 0}

        class CountingProvider(DeterministicMockEmbedder):
            def embed_batch(self, texts):
                calls["n"] += 1
                return super().embed_batch(texts)

        provider = CountingProvider(EmbeddingProviderConfig(dim=8))
        chunks = [make_chunk("d0#0", "a body"), make_chunk("d0#0", "b body")]
        with pytest.raises(ValidationError):
            build_index(chunks, provider)
        assert calls["n"] == 0

    def test_empty_body_skipped_with_warning(self):
        provider = DeterministicMockEmbedder(EmbeddingProviderConfig(dim=8))
        chunks = [make_chunk("d0#0", "real body"),
                  make_chunk("d1#0", "   "),
                  make_chunk("d2#0", "another body")]
        index = build_index(chunks, provider)
        assert len(index) == 2
        assert len(index.build_warnings) == 1
        assert "d1#0" in index.build_warnings[0]


class TestSearch:
    def test_hand_computable_cosines(self):
        index = hand_index()
        result = search(index, EmbeddingVector(np.array([1.0, 0.0])), 3)
        ids = [e[0] for e in result.entries]
        ranks = [e[1] for e in result.entries]
        scores = [e[2] for e in result.entries]
        assert ids == ["c1", "c3", "c2"]
        assert ranks == [1, 2, 3]
        assert scores == pytest.approx([1.0, 0.6, 0.0], abs=1e-6)

    def test_top_one(self):
        index = hand_index()
        result = search(index, EmbeddingVector(np.array([1.0, 0.0])), 1)
        assert [(e[0], e[1]) for e in result.entries] == [("c1", 1)]
        assert result.entries[0][2] == pytest.approx(1.0, abs=1e-9)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(404)
        matrix = rng.normal(size=(64, 8)).astype(np.float32)
        index = VectorIndex(8, [f"c{i:02d}" for i in range(64)], matrix)
        for _ in range(10):
            query = EmbeddingVector(rng.normal(size=8))
            got = search(index, query, 10)
            expected = brute_force_top_k(index, query, 10)
            assert [e[0] for e in got.entries] == [e[0] for e in expected]
            for (_, _, score), (_, oracle_score) in zip(got.entries, expected):
                assert abs(score - oracle_score) <= 1e-9

    def test_ties_broken_by_ascending_chunk_id(self):
        row = np.array([0.6, 0.8], dtype=np.float32)
        matrix = np.vstack([row, row, row])
        index = VectorIndex(2, ["zeta", "alpha", "mid"], matrix)
        result = search(index, EmbeddingVector(np.array([0.6, 0.8])), 3)
        assert [e[0] for e in result.entries] == ["alpha", "mid", "zeta"]

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        matrix = rng.normal(size=(30, 4)).astype(np.float32)
        index = VectorIndex(4, [f"c{i}" for i in range(30)], matrix)
        query = EmbeddingVector(rng.normal(size=4))
        assert search(index, query, 5) == search(index, query, 5)

    def test_scores_non_increasing(self):
        rng = np.random.default_rng(8)
        matrix = rng.normal(size=(50, 6)).astype(np.float32)
        index = VectorIndex(6, [f"c{i}" for i in range(50)], matrix)
        result = search(index, EmbeddingVector(rng.normal(size=6)), 20)
        scores = [e[2] for e in result.entries]
        assert scores == sorted(scores, reverse=True)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            search(hand_index(), EmbeddingVector(np.array([1.0, 0.0, 0.0])), 2)

    def test_top_k_capped_at_index_size(self):
        result = search(hand_index(), EmbeddingVector(np.array([1.0, 0.0])), 99)
        assert len(result.entries) == 3


class TestPersistence:
    def test_round_trip_three_entries(self, tmp_path):
        index = hand_index()
        index.metadata.update({"c1": ChunkRef("c1", 0), "c2": ChunkRef("c2", 0),
                               "c3": ChunkRef("c3", 0)})
        path = tmp_path / "small.idx"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.dim == index.dim
        assert loaded.ids == index.ids
        assert np.array_equal(loaded.matrix, index.matrix)
        assert loaded.matrix.dtype == np.float32
        assert loaded.metadata == index.metadata

    def test_round_trip_preserves_search(self, tmp_path):
        rng = np.random.default_rng(77)
        matrix = rng.normal(size=(40, 16)).astype(np.float32)
        index = VectorIndex(16, [f"c{i:03d}" for i in range(40)], matrix)
        path = tmp_path / "mid.idx"
        save_index(index, path)
        loaded = load_index(path)
        query = EmbeddingVector(rng.normal(size=16))
        assert search(index, query, 10) == search(loaded, query, 10)

    def test_wrong_magic_is_corruption(self):
        data = dumps_index(hand_index())
        with pytest.raises(IndexFormatError):
            loads_index(b"XXXX" + data[4:])

    def test_unsupported_version(self):
        data = bytearray(dumps_index(hand_index()))
        data[4:8] = (99).to_bytes(4, "little")
        with pytest.raises(UnsupportedVersionError):
            loads_index(bytes(data))

    def test_truncated_file_is_corruption(self):
        data = dumps_index(hand_index())
        with pytest.raises(IndexFormatError, match="truncated"):
            loads_index(data[:-3])

    def test_trailing_garbage_is_corruption(self):
        data = dumps_index(hand_index())
        with pytest.raises(IndexFormatError):
            loads_index(data + b"\x00")


def test_index_rejects_duplicate_ids():
    with pytest.raises(ValidationError):
        VectorIndex(2, ["a", "a"], np.zeros((2, 2), dtype=np.float32))
