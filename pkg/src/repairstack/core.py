"""Domain model and manifest ingestion for benchmark bugs and repair outcomes.

The manifest is a line-delimited JSON file: the first line is a header object
(``{"format": "bug-manifest", "version": 1}``) and every following line is one
bug record with snake_case field names matching :class:`BugInstance`. Records
stream one per line so large datasets stay append- and diff-friendly.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

MANIFEST_FORMAT = "bug-manifest"
MANIFEST_VERSION = 1

_FULL_COMMIT_RE = re.compile(r"^[0-9a-f]{40}$")


class ManifestError(ValueError):
    """A manifest record that violates the documented schema.

    Carries the offending ``bug_id`` and field name when they are known so
    callers can point at the exact record.
    """

    def __init__(self, message: str, *, bug_id: str | None = None, field_name: str | None = None):
        detail = message
        if field_name:
            detail = f"field '{field_name}': {detail}"
        if bug_id:
            detail = f"bug '{bug_id}': {detail}"
        super().__init__(detail)
        self.bug_id = bug_id
        self.field_name = field_name


class BugType(enum.Enum):
    """The nine bug taxonomy categories; unknown labels are rejected at parse time."""

    PROGRAM_ANOMALY = "ProgramAnomaly"
    NETWORK = "Network"
    CONFIGURATION = "Configuration"
    GUI_RELATED = "GuiRelated"
    PERFORMANCE = "Performance"
    PERMISSION_DEPRECATION = "PermissionDeprecation"
    DATABASE = "Database"
    SECURITY = "Security"
    TEST_CODE = "TestCode"

    @classmethod
    def from_label(cls, label: str) -> "BugType":
        for member in cls:
            if member.value == label:
                return member
        known = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown bug type {label!r}; expected one of: {known}")


class Layer(enum.Enum):
    """Knowledge-injection layers, ordered from local to project-wide context."""

    L1 = "L1"
    L2 = "L2"
    L3 = "L3"

    @property
    def order(self) -> int:
        return {"L1": 1, "L2": 2, "L3": 3}[self.value]

    @property
    def next(self) -> "Layer | None":
        return {Layer.L1: Layer.L2, Layer.L2: Layer.L3, Layer.L3: None}[self]


class CaseKind(enum.Enum):
    RUNTIME = "runtime"
    ANGELIC = "angelic"


@dataclass(frozen=True)
class FunctionSpan:
    """Location of the buggy function: repo-relative file plus 1-based inclusive lines."""

    file_path: str
    qualified_name: str
    start_line: int
    end_line: int

    def __post_init__(self) -> None:
        if not self.file_path:
            raise ValueError("FunctionSpan: file_path must be non-empty")
        if self.start_line < 1 or self.start_line > self.end_line:
            raise ValueError(
                f"FunctionSpan: requires 1 <= start_line <= end_line, "
                f"got start_line={self.start_line}, end_line={self.end_line}"
            )

    @property
    def line_count(self) -> int:
        return self.end_line - self.start_line + 1


@dataclass(frozen=True)
class Variable:
    """One captured variable: identifier, rendered value text, and type name."""

    name: str
    value: str
    type_name: str

    def __post_init__(self) -> None:
        if not self.name.isidentifier():
            raise ValueError(f"variable name {self.name!r} is not an identifier")
        if "\x00" in self.value:
            raise ValueError(f"variable {self.name!r}: rendered value must be plain text")


@dataclass(frozen=True)
class ValueCase:
    """One runtime or angelic observation over a non-empty set of variables."""

    kind: CaseKind
    variables: tuple[Variable, ...]

    def __post_init__(self) -> None:
        if not self.variables:
            raise ValueError("ValueCase: variables must be non-empty")


@dataclass(frozen=True)
class BugInstance:
    """One benchmark bug with its commits, span, tests, labels, and value cases."""

    bug_id: str
    project: str
    buggy_commit: str
    fix_commit: str
    span: FunctionSpan
    failing_tests: tuple[str, ...]
    error_info: str | None = None
    runtime_cases: tuple[ValueCase, ...] = ()
    angelic_cases: tuple[ValueCase, ...] = ()
    issue_title: str | None = None
    issue_body: str | None = None
    bug_type: BugType = BugType.PROGRAM_ANOMALY

    def __post_init__(self) -> None:
        if not self.bug_id:
            raise ValueError("bug_id must be non-empty")
        for name, value in (("buggy_commit", self.buggy_commit), ("fix_commit", self.fix_commit)):
            if not _FULL_COMMIT_RE.match(value):
                raise ValueError(f"{name} must be a full 40-hex commit hash, got {value!r}")
        if self.buggy_commit == self.fix_commit:
            raise ValueError("buggy_commit and fix_commit must differ")
        if not self.failing_tests:
            raise ValueError("failing_tests must be non-empty")
        for case in self.runtime_cases:
            if case.kind is not CaseKind.RUNTIME:
                raise ValueError("runtime_cases may only contain runtime-kind cases")
        for case in self.angelic_cases:
            if case.kind is not CaseKind.ANGELIC:
                raise ValueError("angelic_cases may only contain angelic-kind cases")

    @property
    def has_issue(self) -> bool:
        return self.issue_title is not None or self.issue_body is not None


@dataclass(frozen=True)
class RepairOutcome:
    """Sampled-repair result for one bug at one layer: n samples, c plausible."""

    bug_id: str
    layer: Layer
    n: int
    c: int
    attempts: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("n must be positive for any attempted layer")
        if not 0 <= self.c <= self.n:
            raise ValueError(f"c must satisfy 0 <= c <= n, got c={self.c}, n={self.n}")

    @property
    def fixed(self) -> bool:
        return self.c > 0


def _case_to_json(case: ValueCase) -> dict[str, Any]:
    return {
        "kind": case.kind.value,
        "variables": [
            {"name": v.name, "value": v.value, "type_name": v.type_name} for v in case.variables
        ],
    }


def _case_from_json(raw: Mapping[str, Any]) -> ValueCase:
    variables = tuple(
        Variable(name=v["name"], value=v["value"], type_name=v["type_name"])
        for v in raw["variables"]
    )
    return ValueCase(kind=CaseKind(raw["kind"]), variables=variables)


def bug_to_record(bug: BugInstance) -> dict[str, Any]:
    """Serialize one bug to its manifest record (plain JSON-compatible dict)."""
    return {
        "bug_id": bug.bug_id,
        "project": bug.project,
        "buggy_commit": bug.buggy_commit,
        "fix_commit": bug.fix_commit,
        "span": {
            "file_path": bug.span.file_path,
            "qualified_name": bug.span.qualified_name,
            "start_line": bug.span.start_line,
            "end_line": bug.span.end_line,
        },
        "failing_tests": list(bug.failing_tests),
        "error_info": bug.error_info,
        "runtime_cases": [_case_to_json(c) for c in bug.runtime_cases],
        "angelic_cases": [_case_to_json(c) for c in bug.angelic_cases],
        "issue_title": bug.issue_title,
        "issue_body": bug.issue_body,
        "bug_type": bug.bug_type.value,
    }


def bug_from_record(raw: Mapping[str, Any]) -> BugInstance:
    """Parse and validate one manifest record; raises :class:`ManifestError`."""
    bug_id = str(raw.get("bug_id") or "")
    try:
        span_raw = raw["span"]
        span = FunctionSpan(
            file_path=span_raw["file_path"],
            qualified_name=span_raw["qualified_name"],
            start_line=int(span_raw["start_line"]),
            end_line=int(span_raw["end_line"]),
        )
    except KeyError as exc:
        raise ManifestError(f"missing key {exc}", bug_id=bug_id, field_name="span") from exc
    except (TypeError, ValueError) as exc:
        raise ManifestError(str(exc), bug_id=bug_id, field_name="span") from exc
    try:
        bug_type = BugType.from_label(raw["bug_type"])
    except KeyError as exc:
        raise ManifestError("missing", bug_id=bug_id, field_name="bug_type") from exc
    except ValueError as exc:
        raise ManifestError(str(exc), bug_id=bug_id, field_name="bug_type") from exc
    try:
        return BugInstance(
            bug_id=raw["bug_id"],
            project=raw["project"],
            buggy_commit=raw["buggy_commit"],
            fix_commit=raw["fix_commit"],
            span=span,
            failing_tests=tuple(raw["failing_tests"]),
            error_info=raw.get("error_info"),
            runtime_cases=tuple(_case_from_json(c) for c in raw.get("runtime_cases", [])),
            angelic_cases=tuple(_case_from_json(c) for c in raw.get("angelic_cases", [])),
            issue_title=raw.get("issue_title"),
            issue_body=raw.get("issue_body"),
            bug_type=bug_type,
        )
    except KeyError as exc:
        raise ManifestError(f"missing key {exc}", bug_id=bug_id) from exc
    except (TypeError, ValueError) as exc:
        raise ManifestError(str(exc), bug_id=bug_id) from exc


def load_manifest(path: str | Path) -> list[BugInstance]:
    """Load, validate, and order (by bug_id) every record of a manifest file."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        header_line = handle.readline()
        if not header_line.strip():
            raise ManifestError(f"{path}: missing manifest header line")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: malformed header: {exc}") from exc
        if header.get("format") != MANIFEST_FORMAT:
            raise ManifestError(f"{path}: unexpected manifest format {header.get('format')!r}")
        if header.get("version") != MANIFEST_VERSION:
            raise ManifestError(f"{path}: unsupported manifest version {header.get('version')!r}")
        bugs: dict[str, BugInstance] = {}
        for line_no, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{line_no}: malformed record: {exc}") from exc
            bug = bug_from_record(raw)
            if bug.bug_id in bugs:
                raise ManifestError("duplicate bug_id", bug_id=bug.bug_id)
            bugs[bug.bug_id] = bug
    return [bugs[bug_id] for bug_id in sorted(bugs)]


def save_manifest(bugs: Iterable[BugInstance], path: str | Path) -> None:
    """Write a manifest file (header plus one record per line, bug_id order)."""
    ordered = sorted(bugs, key=lambda b: b.bug_id)
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(json.dumps({"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION}) + "\n")
        for bug in ordered:
            handle.write(json.dumps(bug_to_record(bug), sort_keys=True) + "\n")


def taxonomy_counts(bugs: Sequence[BugInstance]) -> dict[BugType, int]:
    """Count bugs per taxonomy category; every category appears, zeros included."""
    counts = {bug_type: 0 for bug_type in BugType}
    for bug in bugs:
        counts[bug.bug_type] += 1
    return counts
