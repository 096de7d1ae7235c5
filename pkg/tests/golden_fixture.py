"""Builders for the golden-prompt fixture bug and its three context bundles.

Everything here is deterministic: the checkout, history, docs, and issue
corpus are fixtures, and Layer-3 QA runs in offline extractive mode.
"""
from __future__ import annotations

import hashlib
from datetime import datetime, timezone
from pathlib import Path

from repairstack.bug_knowledge import assemble_bug_context
from repairstack.core import BugInstance, BugType, CaseKind, FunctionSpan, ValueCase, Variable
from repairstack.project_knowledge import (
    IssueIndex,
    ProjectContext,
    answer_doc_questions,
    answer_issue_questions,
    build_doc_index,
    load_documentation,
    load_issue_records,
    retrieve_doc_context,
    retrieve_similar_issues,
)
from repairstack.repo_knowledge import (
    Commit,
    DependencySet,
    Hunk,
    RepoContext,
    extract_called_definitions,
    find_callers,
    latest_change,
    mine_co_occurring_files,
)
from repairstack.retrieval import LexicalEmbedder

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_REPO = FIXTURES / "golden_repo"
GOLDEN_DOCS = FIXTURES / "golden_docs"
GOLDEN_ISSUES = FIXTURES / "golden_issues.jsonl"

FIX_DATE = datetime(2021, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def commit_hash(seed: str) -> str:
    return hashlib.sha1(seed.encode("utf-8")).hexdigest()


def golden_bug() -> BugInstance:
    return BugInstance(
        bug_id="demo-001",
        project="golden",
        buggy_commit=commit_hash("golden-buggy"),
        fix_commit=commit_hash("golden-fix"),
        span=FunctionSpan(
            file_path="app/calc.py",
            qualified_name="app.calc.rolling_mean",
            start_line=6,
            end_line=10,
        ),
        failing_tests=("tests/test_calc.py::test_rolling_mean_short_window",),
        error_info=(
            "assert 0.5 == 2.0\n"
            " +  where 0.5 = rolling_mean([2.0], 4)\n"
            "tests/test_calc.py:5: AssertionError"
        ),
        runtime_cases=(
            ValueCase(
                kind=CaseKind.RUNTIME,
                variables=(
                    Variable("values", "[2.0]", "list"),
                    Variable("window", "4", "int"),
                    Variable("total", "2.0", "float"),
                ),
            ),
        ),
        angelic_cases=(
            ValueCase(
                kind=CaseKind.ANGELIC,
                variables=(Variable("window", "1", "int"),),
            ),
        ),
        issue_title="rolling_mean wrong for short history",
        issue_body=(
            "With fewer values than the window size, rolling_mean divides by the "
            "nominal window and reports a mean that is far too small."
        ),
        bug_type=BugType.PROGRAM_ANOMALY,
    )


def golden_history() -> list[Commit]:
    return [
        Commit(
            hash=commit_hash("golden-c1"),
            author_date=datetime(2021, 1, 5, 9, 0, 0, tzinfo=timezone.utc),
            message="introduce rolling statistics",
            files=("app/calc.py", "app/helpers.py"),
            hunks={
                "app/calc.py": (Hunk(old_start=0, old_len=0, new_start=1, new_len=14),),
                "app/helpers.py": (Hunk(old_start=0, old_len=0, new_start=1, new_len=9),),
            },
        ),
        Commit(
            hash=commit_hash("golden-c2"),
            author_date=datetime(2021, 1, 20, 15, 30, 0, tzinfo=timezone.utc),
            message="guard clamp bounds in rolling mean",
            files=("app/calc.py", "tests/test_calc.py"),
            hunks={
                "app/calc.py": (
                    Hunk(
                        old_start=10,
                        old_len=1,
                        new_start=10,
                        new_len=1,
                        lines=(
                            "-    return clamp(total / window, 0.0, 1.0)",
                            "+    return clamp(total / window, 0.0, 100.0)",
                        ),
                    ),
                ),
                "tests/test_calc.py": (Hunk(old_start=4, old_len=1, new_start=4, new_len=2),),
            },
        ),
        Commit(
            hash=commit_hash("golden-c3"),
            author_date=datetime(2021, 2, 10, 11, 0, 0, tzinfo=timezone.utc),
            message="widen helper coverage",
            files=("app/helpers.py", "tests/test_calc.py"),
            hunks={
                "app/helpers.py": (Hunk(old_start=6, old_len=1, new_start=6, new_len=4),),
            },
        ),
        Commit(
            hash=commit_hash("golden-fix"),
            author_date=FIX_DATE,
            message="divide by the observed count in rolling_mean",
            files=("app/calc.py",),
            hunks={
                "app/calc.py": (Hunk(old_start=10, old_len=1, new_start=10, new_len=2),),
            },
        ),
    ]


def golden_bug_context():
    return assemble_bug_context(golden_bug(), GOLDEN_REPO)


def golden_repo_context() -> RepoContext:
    bug = golden_bug()
    history = golden_history()
    bug_ctx = golden_bug_context()
    co = mine_co_occurring_files(history, bug.span.file_path, 5)
    called = extract_called_definitions(
        bug_ctx.buggy_source, bug_ctx.imports, GOLDEN_REPO, source_file=bug.span.file_path
    )
    callers = find_callers(bug.span.qualified_name, co, GOLDEN_REPO)
    change = latest_change(history, bug.span, bug.fix_commit)
    return RepoContext(
        co_occurring=tuple(co),
        dependencies=DependencySet(
            called_definitions=called.entries, caller_definitions=tuple(callers)
        ),
        latest_change=change,
        unresolved_names=called.unresolved,
    )


def golden_project_context() -> ProjectContext:
    bug = golden_bug()
    bug_ctx = golden_bug_context()
    repo_ctx = golden_repo_context()
    embedder = LexicalEmbedder()
    doc_index = build_doc_index(load_documentation(GOLDEN_DOCS), embedder)
    doc_hits = retrieve_doc_context(
        doc_index,
        bug_ctx.buggy_source,
        [d.qualified_name for d in repo_ctx.dependencies.called_definitions],
        embedder,
        k=2,
    )
    doc_insights = answer_doc_questions(doc_hits.hits, None, function_name="rolling_mean")
    issue_index = IssueIndex(load_issue_records(GOLDEN_ISSUES), embedder, fix_date=FIX_DATE)
    issue_hits = retrieve_similar_issues(issue_index, bug_ctx.buggy_source, FIX_DATE, k=2)
    issue_insights = answer_issue_questions(
        list(issue_hits.hits), None, function_name="rolling_mean"
    )
    return ProjectContext(
        doc_insights=doc_insights,
        issue_insights=issue_insights,
        doc_missing=doc_hits.missing,
        issues_missing=issue_hits.missing,
    )
