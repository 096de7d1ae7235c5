"""Extract code from model responses, splice it over the span, validate via sandbox.

A sample is plausible exactly when every originally failing test passes and no
selected regression test fails. Sandbox trouble (timeout, crash, transport) is
conservative: it never counts toward the plausible tally.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import BugInstance, FunctionSpan, Layer
from .sandbox import Sandbox, SandboxError, run_tests_request

_FENCE_RE = re.compile(r"^\s*```")

DEFAULT_VALIDATION_TIMEOUT_S = 300.0


class SpliceError(ValueError):
    """Span that cannot be spliced into the target source."""


class Verdict(enum.Enum):
    PLAUSIBLE = "plausible"
    FAILING = "failing"
    NOT_EXTRACTABLE = "not_extractable"
    SPLICE_ERROR = "splice_error"
    SANDBOX_ERROR = "sandbox_error"


@dataclass(frozen=True)
class TestResult:
    test_id: str
    passed: bool
    failure_text: str = ""


@dataclass(frozen=True)
class PatchAttempt:
    """One sampled candidate: extracted code, splice state, sandbox verdict."""

    bug_id: str
    layer: Layer
    sample_index: int
    extracted_code: str | None
    splice_ok: bool
    verdict: Verdict
    test_results: tuple[TestResult, ...] = ()

    @property
    def attempt_id(self) -> str:
        return f"{self.bug_id}:{self.layer.value}:{self.sample_index}"


def extract_code_block(response: str) -> str | None:
    """Content of the longest triple-backtick block; None when no fence exists.

    The language tag on the opening fence is ignored; an unterminated fence
    runs to the end of the response (models truncate occasionally).
    """
    lines = response.splitlines()
    blocks: list[str] = []
    current: list[str] | None = None
    for line in lines:
        if _FENCE_RE.match(line):
            if current is None:
                current = []
            else:
                blocks.append("\n".join(current))
                current = None
        elif current is not None:
            current.append(line)
    if current is not None:
        blocks.append("\n".join(current))
    if not blocks:
        return None
    return max(blocks, key=len)


def splice_patch(file_source: str, span: FunctionSpan, new_function: str) -> str:
    """Replace lines [start_line, end_line] with ``new_function``; rest untouched.

    The replacement's indentation is used as-is. A newline is appended to the
    replacement only when more lines follow, so re-splicing the original
    function text reproduces the file byte-for-byte.
    """
    if not new_function:
        raise SpliceError("replacement function must be non-empty")
    lines = file_source.splitlines(keepends=True)
    if span.end_line > len(lines):
        raise SpliceError(
            f"span [{span.start_line}, {span.end_line}] exceeds the {len(lines)}-line file"
        )
    head = lines[: span.start_line - 1]
    tail = lines[span.end_line :]
    replacement = new_function
    if tail and not replacement.endswith(("\n", "\r\n", "\r")):
        replacement += "\n"
    return "".join(head) + replacement + "".join(tail)


def regression_test_files(failing_tests: Sequence[str]) -> list[str]:
    """Default regression selection: the failing tests' containing test files."""
    files: list[str] = []
    for test_id in failing_tests:
        file_part = test_id.split("::")[0]
        if file_part not in files:
            files.append(file_part)
    return files


def validate(
    checkout: str | Path,
    bug: BugInstance,
    new_source: str,
    sandbox: Sandbox,
    *,
    regression_tests: Sequence[str] | None = None,
    timeout_s: float = DEFAULT_VALIDATION_TIMEOUT_S,
) -> tuple[Verdict, tuple[TestResult, ...]]:
    """Run the failing tests plus the regression selection against the patch.

    Regression tests not listed among the failing tests are treated as
    previously passing, so any failure among them blocks the plausible
    verdict.
    """
    if regression_tests is None:
        regression_tests = regression_test_files(bug.failing_tests)
    tests = list(bug.failing_tests)
    for test_id in regression_tests:
        if test_id not in tests:
            tests.append(test_id)
    patch = {
        "file": bug.span.file_path,
        "start_line": bug.span.start_line,
        "end_line": bug.span.end_line,
        "new_source": new_source,
    }
    try:
        response = sandbox.run(run_tests_request(checkout, tests, patch=patch, timeout_s=timeout_s))
    except SandboxError:
        return Verdict.SANDBOX_ERROR, ()
    status = response.get("status")
    if status == "splice_error":
        return Verdict.SPLICE_ERROR, ()
    if status != "ok":
        return Verdict.SANDBOX_ERROR, ()
    results = tuple(
        TestResult(
            test_id=entry.get("id", ""),
            passed=bool(entry.get("passed")),
            failure_text=entry.get("failure_text", "") or "",
        )
        for entry in response.get("tests", ())
    )
    reported = {result.test_id for result in results}
    if any(test_id not in reported for test_id in tests):
        return Verdict.SANDBOX_ERROR, results
    verdict = Verdict.PLAUSIBLE if all(result.passed for result in results) else Verdict.FAILING
    return verdict, results


def run_attempt(
    bug: BugInstance,
    layer: Layer,
    sample_index: int,
    response_text: str,
    checkout: str | Path,
    sandbox: Sandbox,
    *,
    regression_tests: Sequence[str] | None = None,
    timeout_s: float = DEFAULT_VALIDATION_TIMEOUT_S,
) -> PatchAttempt:
    """Extraction plus validation for one sampled response; always yields a verdict."""
    code = extract_code_block(response_text)
    if code is None:
        return PatchAttempt(
            bug_id=bug.bug_id,
            layer=layer,
            sample_index=sample_index,
            extracted_code=None,
            splice_ok=False,
            verdict=Verdict.NOT_EXTRACTABLE,
        )
    verdict, results = validate(
        checkout, bug, code, sandbox, regression_tests=regression_tests, timeout_s=timeout_s
    )
    return PatchAttempt(
        bug_id=bug.bug_id,
        layer=layer,
        sample_index=sample_index,
        extracted_code=code,
        splice_ok=verdict is not Verdict.SPLICE_ERROR,
        verdict=verdict,
        test_results=results,
    )
