from __future__ import annotations

import math
import random
import string

import pytest

from repairstack.retrieval import (
    Chunk,
    ChunkingConfigError,
    DimensionMismatchError,
    EmbeddingVector,
    LexicalEmbedder,
    VectorIndex,
    chunk_text,
    combined_similarity,
    cosine_similarity,
    query,
)


def test_chunk_lengths_without_overlap():
    chunks = chunk_text("0123456789", size=4, overlap=0)
    assert [c.text for c in chunks] == ["0123", "4567", "89"]
    assert [c.ordinal for c in chunks] == [0, 1, 2]


def test_chunk_starts_with_overlap():
    # starts at i*(size-overlap) = 0, 3, 6, 9
    chunks = chunk_text("0123456789", size=4, overlap=1)
    assert [c.char_range for c in chunks] == [(0, 4), (3, 7), (6, 10), (9, 10)]
    assert [len(c.text) for c in chunks] == [4, 4, 4, 1]


def test_chunk_empty_text():
    assert chunk_text("", size=4, overlap=1) == []


def test_chunk_size_must_exceed_overlap():
    with pytest.raises(ChunkingConfigError):
        chunk_text("abc", size=3, overlap=3)
    with pytest.raises(ChunkingConfigError):
        chunk_text("abc", size=2, overlap=-1)


def deoverlap(chunks: list[Chunk], overlap: int) -> str:
    if not chunks:
        return ""
    return chunks[0].text + "".join(c.text[overlap:] for c in chunks[1:])


def test_chunk_round_trip_on_random_texts():
    rng = random.Random(2024)
    for _ in range(50):
        text = "".join(rng.choices(string.ascii_lowercase + " \n", k=rng.randrange(0, 200)))
        size = rng.randrange(2, 30)
        overlap = rng.randrange(0, size)
        chunks = chunk_text(text, size=size, overlap=overlap)
        assert deoverlap(chunks, overlap) == text


def test_lexical_embedder_is_deterministic():
    embedder = LexicalEmbedder()
    assert embedder.embed("alpha beta gamma") == embedder.embed("alpha beta gamma")


def test_self_similarity_beats_cross_similarity():
    embedder = LexicalEmbedder()
    alpha = embedder.embed("alpha")
    both = embedder.embed("alpha beta")
    assert cosine_similarity(alpha, alpha) == pytest.approx(1.0)
    assert cosine_similarity(alpha, both) < 1.0


def test_empty_text_embeds_to_degenerate_zero_vector():
    vector = LexicalEmbedder().embed("")
    assert vector.is_degenerate
    assert cosine_similarity(vector, LexicalEmbedder().embed("anything")) == 0.0


def test_bag_of_terms_ignores_token_order():
    embedder = LexicalEmbedder()
    assert embedder.embed("red green blue") == embedder.embed("blue red green")


def test_non_finite_entries_rejected():
    with pytest.raises(ValueError):
        EmbeddingVector((1.0, float("nan")))


def test_query_exact_match_ranks_first():
    embedder = LexicalEmbedder()
    texts = ["kernel panic on boot", "slow database join", "missing css padding"]
    index = VectorIndex((text, embedder.embed(text)) for text in texts)
    hits = index.query(embedder.embed("slow database join"), k=3)
    assert hits[0][0] == "slow database join"
    assert hits[0][1] == pytest.approx(1.0)


def test_query_orthogonal_scores_zero():
    index = VectorIndex([("a", EmbeddingVector((1.0, 0.0)))])
    hits = index.query(EmbeddingVector((0.0, 1.0)), k=1)
    assert hits[0][1] == pytest.approx(0.0)


def test_query_three_entry_hand_ranking():
    # hand-computed cosines against q=(1, 0):
    #   e1=(1, 0) -> 1.0, e2=(1, 1)/sqrt2 -> 0.7071, e3=(0, 1) -> 0.0
    index = VectorIndex(
        [
            ("e3", EmbeddingVector((0.0, 1.0))),
            ("e2", EmbeddingVector((1.0, 1.0))),
            ("e1", EmbeddingVector((1.0, 0.0))),
        ]
    )
    hits = index.query(EmbeddingVector((1.0, 0.0)), k=3)
    assert [payload for payload, _ in hits] == ["e1", "e2", "e3"]
    assert hits[1][1] == pytest.approx(1 / math.sqrt(2))


def test_query_matches_brute_force_ranking():
    rng = random.Random(99)
    vectors = [
        EmbeddingVector(tuple(rng.uniform(-1, 1) for _ in range(8))) for _ in range(100)
    ]
    index = VectorIndex((i, v) for i, v in enumerate(vectors))
    q = EmbeddingVector(tuple(rng.uniform(-1, 1) for _ in range(8)))
    expected = sorted(
        ((i, cosine_similarity(v, q)) for i, v in enumerate(vectors)), key=lambda t: -t[1]
    )
    assert index.query(q, k=100) == expected


def test_query_ties_break_by_insertion_order():
    v = EmbeddingVector((1.0, 0.0))
    index = VectorIndex([("first", v), ("second", v)])
    hits = index.query(v, k=2)
    assert [payload for payload, _ in hits] == ["first", "second"]


def test_query_dimension_mismatch():
    index = VectorIndex([("a", EmbeddingVector((1.0, 0.0)))])
    with pytest.raises(DimensionMismatchError):
        index.query(EmbeddingVector((1.0, 0.0, 0.0)), k=1)


def test_query_k_larger_than_index_returns_all():
    embedder = LexicalEmbedder()
    index = VectorIndex((t, embedder.embed(t)) for t in ["one", "two"])
    assert len(query(index, embedder.embed("one"), 10)) == 2


def test_mixed_dimension_entries_rejected():
    with pytest.raises(DimensionMismatchError):
        VectorIndex([("a", EmbeddingVector((1.0,))), ("b", EmbeddingVector((1.0, 2.0)))])


def test_combined_similarity_paper_weights():
    assert combined_similarity(0.8, 0.6) == pytest.approx(0.7, abs=1e-12)
    assert combined_similarity(0.25, 0.25) == pytest.approx(0.25, abs=1e-12)
    assert combined_similarity(1.0, -1.0) == pytest.approx(0.0, abs=1e-12)


def test_combined_similarity_rejects_out_of_range():
    with pytest.raises(ValueError):
        combined_similarity(1.5, 0.0)


class FlakySession:
    """Fails with a connection error a fixed number of times, then succeeds."""

    def __init__(self, failures: int, vectors):
        self.failures = failures
        self.vectors = vectors
        self.calls = 0

    def post(self, url, json=None, timeout=None):
        self.calls += 1
        if self.calls <= self.failures:
            raise ConnectionError("transient network failure")

        class Response:
            def __init__(self, payload):
                self._payload = payload

            def raise_for_status(self):
                pass

            def json(self):
                return self._payload

        return Response({"vectors": self.vectors})


def test_http_embedding_provider_retries_then_succeeds():
    from repairstack.retrieval import HttpEmbeddingProvider

    session = FlakySession(failures=2, vectors=[[1.0, 0.0], [0.0, 1.0]])
    provider = HttpEmbeddingProvider(
        "http://example.test/embed", dimension=2, max_retries=3, backoff_s=0.0, session=session
    )
    vectors = provider.embed_batch(["a", "b"])
    assert session.calls == 3
    assert [v.values for v in vectors] == [(1.0, 0.0), (0.0, 1.0)]


def test_http_embedding_provider_bounded_retries():
    from repairstack.retrieval import EmbeddingTransportError, HttpEmbeddingProvider

    session = FlakySession(failures=10, vectors=[])
    provider = HttpEmbeddingProvider(
        "http://example.test/embed", dimension=2, max_retries=3, backoff_s=0.0, session=session
    )
    with pytest.raises(EmbeddingTransportError):
        provider.embed_batch(["a"])
    assert session.calls == 3
