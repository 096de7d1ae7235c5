"""Layer-3 context: documentation retrieval-QA and past-issue retrieval-QA.

Both extractors share the retrieval stack. Issue similarity blends two
cosines at equal weight: the text side embeds title/body/discussion/labels,
the code side embeds the fix patch. With no completion provider configured
the QA step degrades to deterministic extractive answers so the pipeline
stays testable offline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .llm import CompletionProvider, CompletionRequest
from .retrieval import (
    Chunk,
    EmbeddingProvider,
    VectorIndex,
    chunk_text,
    combined_similarity,
    cosine_similarity,
)
from .templates import load_question_templates

DOC_MISSING_FLAG = "documentation missing"
ISSUES_MISSING_FLAG = "issue history missing"

NO_DOC_EVIDENCE = "no documentation evidence"
NO_ISSUE_EVIDENCE = "no issue evidence"

EXTRACTIVE_MODE = "extractive"
LLM_MODE = "llm"
NO_EVIDENCE_MODE = "no-evidence"

DOC_EXTENSIONS = (".md", ".rst", ".txt")


@dataclass(frozen=True)
class QaAnswer:
    question: str
    answer: str
    support: tuple[str, ...]
    mode: str = EXTRACTIVE_MODE


@dataclass(frozen=True)
class DocInsights:
    """Exactly four answers, one per fixed documentation question, in template order."""

    answers: tuple[QaAnswer, ...]

    def __post_init__(self) -> None:
        if len(self.answers) != 4:
            raise ValueError("documentation insights carry exactly 4 answers")


@dataclass(frozen=True)
class IssueInsights:
    """Exactly four answers, one per fixed issue-history question, in template order."""

    answers: tuple[QaAnswer, ...]

    def __post_init__(self) -> None:
        if len(self.answers) != 4:
            raise ValueError("issue insights carry exactly 4 answers")


@dataclass(frozen=True)
class IssueRecord:
    issue_id: str
    title: str
    body: str
    discussion: str
    labels: tuple[str, ...]
    fix_patch: str
    resolved_date: datetime

    @property
    def text_blob(self) -> str:
        return "\n".join([self.title, self.body, self.discussion, " ".join(self.labels)])


@dataclass(frozen=True)
class DocRetrieval:
    hits: tuple[tuple[Chunk, float], ...]
    missing: bool
    flag: str | None = None


@dataclass(frozen=True)
class IssueHit:
    record: IssueRecord
    combined_score: float
    text_score: float
    code_score: float


@dataclass(frozen=True)
class IssueRetrieval:
    hits: tuple[IssueHit, ...]
    missing: bool
    flag: str | None = None


@dataclass(frozen=True)
class ProjectContext:
    """The Layer-3 bundle handed to the prompt builder."""

    doc_insights: DocInsights | None
    issue_insights: IssueInsights | None
    doc_missing: bool = False
    issues_missing: bool = False


def _parse_date(value: str) -> datetime:
    parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed


def load_issue_records(path: str | Path) -> list[IssueRecord]:
    """Issue corpus from a line-delimited JSON export."""
    records: list[IssueRecord] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            raw = json.loads(line)
            records.append(
                IssueRecord(
                    issue_id=str(raw["issue_id"]),
                    title=raw.get("title", ""),
                    body=raw.get("body", ""),
                    discussion=raw.get("discussion", ""),
                    labels=tuple(raw.get("labels", ())),
                    fix_patch=raw.get("fix_patch", ""),
                    resolved_date=_parse_date(raw["resolved_date"]),
                )
            )
    return records


def load_documentation(directory: str | Path) -> list[tuple[str, str]]:
    """(source id, text) pairs for every documentation file under ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        return []
    documents = []
    for path in sorted(directory.rglob("*")):
        if path.is_file() and path.suffix.lower() in DOC_EXTENSIONS:
            documents.append((str(path.relative_to(directory)), path.read_text(encoding="utf-8")))
    return documents


def build_doc_index(
    documents: Sequence[tuple[str, str]],
    embedder: EmbeddingProvider,
    *,
    chunk_size: int = 1000,
    chunk_overlap: int = 200,
) -> VectorIndex:
    """Chunk every document and index the chunks for similarity search."""
    chunks: list[Chunk] = []
    for source_id, text in documents:
        chunks.extend(chunk_text(text, chunk_size, chunk_overlap, source_id=source_id))
    vectors = embedder.embed_batch([chunk.text for chunk in chunks])
    return VectorIndex(zip(chunks, vectors))


def retrieve_doc_context(
    doc_index: VectorIndex,
    buggy_source: str,
    called_apis: Sequence[str],
    embedder: EmbeddingProvider,
    *,
    k: int = 5,
) -> DocRetrieval:
    """Top-k documentation chunks for the function body plus its called API names."""
    if len(doc_index) == 0:
        return DocRetrieval(hits=(), missing=True, flag=DOC_MISSING_FLAG)
    query_text = buggy_source + "\n" + " ".join(called_apis)
    query_vector = embedder.embed_batch([query_text])[0]
    return DocRetrieval(hits=tuple(doc_index.query(query_vector, k)), missing=False)


class IssueIndex:
    """Past-issue index with separate text and fix-patch vectors per record.

    Only issues resolved strictly before ``fix_date`` are admitted at build
    time; the same filter re-applies on every query as a guard.
    """

    def __init__(
        self,
        records: Sequence[IssueRecord],
        embedder: EmbeddingProvider,
        *,
        fix_date: datetime | None = None,
    ):
        self.fix_date = fix_date
        admitted = [
            record
            for record in records
            if fix_date is None or record.resolved_date < fix_date
        ]
        self._records = tuple(admitted)
        self._text_vectors = embedder.embed_batch([r.text_blob for r in admitted])
        self._code_vectors = embedder.embed_batch([r.fix_patch for r in admitted])
        self._embedder = embedder

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[IssueRecord, ...]:
        return self._records

    def query(self, buggy_source: str, *, fix_date: datetime | None = None, k: int = 5) -> list[IssueHit]:
        cutoff = fix_date or self.fix_date
        query_vector = self._embedder.embed_batch([buggy_source])[0]
        hits = []
        for record, text_vector, code_vector in zip(self._records, self._text_vectors, self._code_vectors):
            if cutoff is not None and not record.resolved_date < cutoff:
                continue
            text_score = cosine_similarity(text_vector, query_vector)
            code_score = cosine_similarity(code_vector, query_vector)
            hits.append(
                IssueHit(
                    record=record,
                    combined_score=combined_similarity(text_score, code_score),
                    text_score=text_score,
                    code_score=code_score,
                )
            )
        hits.sort(key=lambda hit: -hit.combined_score)
        return hits[:k]


def retrieve_similar_issues(
    issue_index: IssueIndex,
    buggy_source: str,
    fix_date: datetime | None,
    *,
    k: int = 5,
) -> IssueRetrieval:
    """Issues ranked by the 50/50 text-code similarity blend, date-filtered."""
    hits = issue_index.query(buggy_source, fix_date=fix_date, k=k)
    if not hits:
        return IssueRetrieval(hits=(), missing=True, flag=ISSUES_MISSING_FLAG)
    return IssueRetrieval(hits=tuple(hits), missing=False)


def _answer(
    question: str,
    context: str,
    support: tuple[str, ...],
    llm: CompletionProvider | None,
    no_evidence_text: str,
) -> QaAnswer:
    if not context:
        return QaAnswer(question=question, answer=no_evidence_text, support=(), mode=NO_EVIDENCE_MODE)
    if llm is None:
        return QaAnswer(question=question, answer=context, support=support, mode=EXTRACTIVE_MODE)
    prompt = f"{context}\n\nQuestion: {question}\nAnswer concisely using only the material above."
    batch = llm.complete(CompletionRequest(prompt=prompt, n=1, temperature=0.0))
    return QaAnswer(question=question, answer=batch.responses[0], support=support, mode=LLM_MODE)


def answer_doc_questions(
    chunks: Sequence[tuple[Chunk, float]],
    llm: CompletionProvider | None = None,
    *,
    function_name: str = "the buggy function",
) -> DocInsights:
    """One answer per fixed documentation question, in template order."""
    questions = [q.format(function=function_name) for q in load_question_templates("doc_questions.txt")]
    context = "\n\n".join(chunk.text for chunk, _ in chunks)
    support = tuple(chunk.chunk_id for chunk, _ in chunks)
    return DocInsights(
        answers=tuple(_answer(q, context, support, llm, NO_DOC_EVIDENCE) for q in questions)
    )


def answer_issue_questions(
    issues: Sequence[IssueHit],
    llm: CompletionProvider | None = None,
    *,
    function_name: str = "the buggy function",
) -> IssueInsights:
    """One answer per fixed issue-history question, in template order."""
    questions = [q.format(function=function_name) for q in load_question_templates("issue_questions.txt")]
    parts = []
    for hit in issues:
        record = hit.record
        parts.append(
            f"Issue {record.issue_id}: {record.title}\n{record.body}\n{record.discussion}\n"
            f"Fix patch:\n{record.fix_patch}"
        )
    context = "\n\n".join(parts)
    support = tuple(hit.record.issue_id for hit in issues)
    return IssueInsights(
        answers=tuple(_answer(q, context, support, llm, NO_ISSUE_EVIDENCE) for q in questions)
    )
