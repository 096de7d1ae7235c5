"""Text chunking, deterministic lexical embeddings, and an exhaustive cosine top-k index.

Shared by the documentation and issue-history retrievers. The lexical embedder
is a hashed bag-of-terms vector, so the whole retrieval path runs offline and
reproducibly; remote embedding services plug in behind the same provider
contract (list of texts in, equal-dimension vectors out, bounded retries).
"""
from __future__ import annotations

import math
import re
import time
import zlib
from dataclasses import dataclass
from typing import Any, Iterable, Protocol, Sequence

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


class ChunkingConfigError(ValueError):
    """Chunk size/overlap combination that cannot tile the input."""


class DimensionMismatchError(ValueError):
    """Query vector dimension differs from the index dimension."""


class EmbeddingTransportError(RuntimeError):
    """Remote embedding provider kept failing after bounded retries."""


@dataclass(frozen=True)
class Chunk:
    """One window of a source text; ``char_range`` is the half-open offset pair."""

    source_id: str
    ordinal: int
    text: str
    char_range: tuple[int, int]

    @property
    def chunk_id(self) -> str:
        return f"{self.source_id}#{self.ordinal}"


def chunk_text(text: str, size: int, overlap: int = 0, *, source_id: str = "") -> list[Chunk]:
    """Split ``text`` into fixed-size windows where chunk i starts at i*(size-overlap).

    Every chunk except possibly the last has exactly ``size`` characters, and
    dropping the first ``overlap`` characters of every chunk after the first
    reconstructs the input.
    """
    if overlap < 0 or size <= overlap:
        raise ChunkingConfigError(f"need size > overlap >= 0, got size={size}, overlap={overlap}")
    step = size - overlap
    chunks: list[Chunk] = []
    start = 0
    ordinal = 0
    while start < len(text):
        piece = text[start : start + size]
        chunks.append(Chunk(source_id=source_id, ordinal=ordinal, text=piece, char_range=(start, start + len(piece))))
        ordinal += 1
        start += step
    return chunks


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        for v in self.values:
            if not math.isfinite(v):
                raise ValueError("embedding vectors must contain only finite entries")

    @property
    def dimension(self) -> int:
        return len(self.values)

    @property
    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))

    @property
    def is_degenerate(self) -> bool:
        """True for all-zero vectors (e.g. embeddings of empty text)."""
        return all(v == 0.0 for v in self.values)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of two vectors, 0.0 when either is degenerate; clamped to [-1, 1]."""
    if a.dimension != b.dimension:
        raise DimensionMismatchError(f"dimensions differ: {a.dimension} vs {b.dimension}")
    norm_a, norm_b = a.norm, b.norm
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot / (norm_a * norm_b)))


def combined_similarity(text_score: float, code_score: float) -> float:
    """Equal-weight blend of the text and code similarity scores."""
    for name, score in (("text_score", text_score), ("code_score", code_score)):
        if not -1.0 <= score <= 1.0:
            raise ValueError(f"{name} must lie in [-1, 1], got {score}")
    return 0.5 * text_score + 0.5 * code_score


class EmbeddingProvider(Protocol):
    @property
    def dimension(self) -> int: ...

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class LexicalEmbedder:
    """Deterministic hashed term-frequency embedder with L2 normalization.

    Token order never matters (bag of terms); identical texts always produce
    identical vectors; empty or token-free text yields the degenerate zero
    vector.
    """

    def __init__(self, dimension: int = 256):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self._dimension = dimension

    @property
    def dimension(self) -> int:
        return self._dimension

    def embed(self, text: str) -> EmbeddingVector:
        counts = [0.0] * self._dimension
        for token in _TOKEN_RE.findall(text.lower()):
            counts[zlib.crc32(token.encode("utf-8")) % self._dimension] += 1.0
        norm = math.sqrt(math.fsum(c * c for c in counts))
        if norm == 0.0:
            return EmbeddingVector(tuple(counts))
        return EmbeddingVector(tuple(c / norm for c in counts))

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.embed(text) for text in texts]


class HttpEmbeddingProvider:
    """Remote embedding endpoint: POST {"texts": [...]} -> {"vectors": [[...], ...]}."""

    def __init__(
        self,
        url: str,
        dimension: int,
        *,
        timeout_s: float = 30.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        session: Any = None,
    ):
        import requests

        self.url = url
        self._dimension = dimension
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._session = session or requests.Session()

    @property
    def dimension(self) -> int:
        return self._dimension

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = self._session.post(self.url, json={"texts": list(texts)}, timeout=self.timeout_s)
                response.raise_for_status()
                vectors = response.json()["vectors"]
                return [EmbeddingVector(tuple(float(v) for v in vec)) for vec in vectors]
            except Exception as exc:  # transport or schema failure; retry with backoff
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise EmbeddingTransportError(
            f"embedding endpoint {self.url} failed after {self.max_retries} attempts: {last_error}"
        )


class VectorIndex:
    """Exhaustive-scan similarity index; immutable once built.

    Entries are (payload, vector) pairs sharing one dimension. Query results
    are ranked by cosine similarity descending with ties broken by insertion
    order.
    """

    def __init__(self, entries: Iterable[tuple[Any, EmbeddingVector]]):
        self._entries: tuple[tuple[Any, EmbeddingVector], ...] = tuple(entries)
        dimensions = {vector.dimension for _, vector in self._entries}
        if len(dimensions) > 1:
            raise DimensionMismatchError(f"entries have mixed dimensions: {sorted(dimensions)}")
        self._dimension = dimensions.pop() if dimensions else 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def entries(self) -> tuple[tuple[Any, EmbeddingVector], ...]:
        return self._entries

    def query(self, q: EmbeddingVector, k: int) -> list[tuple[Any, float]]:
        if k < 0:
            raise ValueError("k must be non-negative")
        if len(self._entries) == 0:
            return []
        if q.dimension != self._dimension:
            raise DimensionMismatchError(
                f"query dimension {q.dimension} does not match index dimension {self._dimension}"
            )
        scored = [(payload, cosine_similarity(vector, q)) for payload, vector in self._entries]
        # sorted() is stable, so equal scores keep insertion order
        ranked = sorted(scored, key=lambda item: -item[1])
        return ranked[:k]


def query(index: VectorIndex, q: EmbeddingVector, k: int) -> list[tuple[Any, float]]:
    """Top-k cosine search; convenience wrapper over :meth:`VectorIndex.query`."""
    return index.query(q, k)
