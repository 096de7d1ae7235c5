from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from repairstack.core import BugInstance, BugType, FunctionSpan

FIXTURES = Path(__file__).parent / "fixtures"


def commit_hash(seed: str) -> str:
    return hashlib.sha1(seed.encode("utf-8")).hexdigest()


def make_bug(bug_id: str = "bug-001", **overrides) -> BugInstance:
    values = dict(
        bug_id=bug_id,
        project="demo",
        buggy_commit=commit_hash(f"{bug_id}-buggy"),
        fix_commit=commit_hash(f"{bug_id}-fix"),
        span=FunctionSpan(
            file_path="pkg/app.py",
            qualified_name="pkg.app.normalize_total",
            start_line=16,
            end_line=25,
        ),
        failing_tests=(f"tests/test_{bug_id.replace('-', '_')}.py::test_fails",),
        bug_type=BugType.PROGRAM_ANOMALY,
    )
    values.update(overrides)
    return BugInstance(**values)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def dep_repo() -> Path:
    return FIXTURES / "dep_repo"


@pytest.fixture
def golden_repo() -> Path:
    return FIXTURES / "golden_repo"
