"""Layer-1 context: the facts that live right next to the bug.

Extracts the buggy function text, the failing tests' sources, error output,
the value cases (capped at three per kind), the issue description, and the
buggy file's top-level imports from a checkout at the buggy commit.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import BugInstance, FunctionSpan, ValueCase
from .sandbox import Sandbox, SandboxError, run_tests_request

VALUE_CASE_LIMIT = 3


class SpanOutOfRangeError(ValueError):
    """Span lines fall outside the target file."""


class InconsistentBugError(RuntimeError):
    """A supposedly failing test passed on the buggy checkout."""


@dataclass(frozen=True)
class BugContext:
    """Everything the Layer-1 prompt section needs, already size-capped."""

    buggy_source: str
    failing_test_sources: tuple[tuple[str, str], ...]
    error_info: str | None
    runtime_cases: tuple[ValueCase, ...]
    angelic_cases: tuple[ValueCase, ...]
    issue_title: str | None
    issue_body: str | None
    imports: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.buggy_source:
            raise ValueError("buggy_source must be non-empty")
        if len(self.runtime_cases) > VALUE_CASE_LIMIT or len(self.angelic_cases) > VALUE_CASE_LIMIT:
            raise ValueError(f"at most {VALUE_CASE_LIMIT} value cases per kind")


def read_file_lines(checkout: str | Path, file_path: str) -> list[str]:
    """File content as lines with their original line endings preserved."""
    target = Path(checkout) / file_path
    if not target.is_file():
        raise FileNotFoundError(f"no such file in checkout: {file_path}")
    with target.open("r", encoding="utf-8", newline="") as handle:
        return handle.read().splitlines(keepends=True)


def extract_buggy_function(checkout: str | Path, span: FunctionSpan) -> str:
    """Exactly lines [start_line, end_line] of the span's file, verbatim."""
    lines = read_file_lines(checkout, span.file_path)
    if span.end_line > len(lines):
        raise SpanOutOfRangeError(
            f"{span.file_path}: span ends at line {span.end_line} "
            f"but the file has {len(lines)} lines"
        )
    return "".join(lines[span.start_line - 1 : span.end_line])


def list_top_level_imports(file_source: str) -> list[str]:
    """Source text of the module-level import statements, in file order.

    Imports nested inside functions or classes are deliberately ignored.
    """
    tree = ast.parse(file_source)
    lines = file_source.splitlines(keepends=True)
    statements = []
    for node in tree.body:
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            end = node.end_lineno if node.end_lineno is not None else node.lineno
            statements.append("".join(lines[node.lineno - 1 : end]).rstrip("\r\n"))
    return statements


def extract_test_source(checkout: str | Path, test_id: str) -> str:
    """Source of the test function named by a ``path::[Class::]name`` identifier.

    Falls back to the whole file when the named function cannot be located
    (module-level test code, parametrized ids, and similar).
    """
    parts = test_id.split("::")
    file_lines = read_file_lines(checkout, parts[0])
    source = "".join(file_lines)
    if len(parts) == 1:
        return source
    target_name = parts[-1].split("[")[0]
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return source
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == target_name:
            first = min([node.lineno] + [d.lineno for d in node.decorator_list])
            end = node.end_lineno if node.end_lineno is not None else node.lineno
            return "".join(file_lines[first - 1 : end])
    return source


def select_value_cases(cases: Sequence[ValueCase], limit: int = VALUE_CASE_LIMIT) -> list[ValueCase]:
    """First min(limit, len) cases in their original order."""
    if limit < 0:
        raise ValueError("limit must be non-negative")
    return list(cases[:limit])


def capture_error_info(
    sandbox: Sandbox,
    checkout: str | Path,
    failing_tests: Sequence[str],
    *,
    timeout_s: float = 300.0,
) -> str:
    """Run the failing tests unpatched and concatenate their failure output.

    Only used when the manifest carries no error_info. A test that passes on
    the buggy checkout signals a broken fixture and raises
    :class:`InconsistentBugError`.
    """
    response = sandbox.run(run_tests_request(checkout, failing_tests, patch=None, timeout_s=timeout_s))
    status = response.get("status")
    if status != "ok":
        raise SandboxError(
            f"sandbox run failed with status {status!r}: {response.get('error', '')}"
        )
    results = {entry["id"]: entry for entry in response.get("tests", [])}
    sections = []
    for test_id in failing_tests:
        entry = results.get(test_id)
        if entry is None:
            raise InconsistentBugError(f"sandbox returned no result for test {test_id!r}")
        if entry.get("passed"):
            raise InconsistentBugError(f"test {test_id!r} passes on the buggy checkout")
        sections.append(f"=== {test_id} ===\n{entry.get('failure_text', '')}".rstrip("\n"))
    return "\n".join(sections) + "\n" if sections else ""


def assemble_bug_context(
    bug: BugInstance,
    checkout: str | Path,
    sandbox: Sandbox | None = None,
) -> BugContext:
    """Build the full Layer-1 context for one bug from its buggy-commit checkout.

    Manifest-provided error_info wins over live capture so runs stay
    reproducible without a prepared interpreter environment.
    """
    buggy_source = extract_buggy_function(checkout, bug.span)
    buggy_file_source = "".join(read_file_lines(checkout, bug.span.file_path))
    imports = tuple(list_top_level_imports(buggy_file_source))
    failing_sources = tuple(
        (test_id, extract_test_source(checkout, test_id)) for test_id in bug.failing_tests
    )
    error_info = bug.error_info
    if error_info is None and sandbox is not None:
        error_info = capture_error_info(sandbox, checkout, bug.failing_tests)
    return BugContext(
        buggy_source=buggy_source,
        failing_test_sources=failing_sources,
        error_info=error_info,
        runtime_cases=tuple(select_value_cases(bug.runtime_cases)),
        angelic_cases=tuple(select_value_cases(bug.angelic_cases)),
        issue_title=bug.issue_title,
        issue_body=bug.issue_body,
        imports=imports,
    )
