"""Builds the three-bug escalation workspace used by the pipeline tests.

Bug A is fixable at layer 1: the provider's good-patch rule keys on A's
function signature, present in every prompt for A. Bug B is fixable only once
layer-2 sections are present: its rule keys on the MARKER-L2 token, which
enters the prompt through bug B's latest-change commit message. Bug C is
never fixed. The mock sandbox accepts exactly the known-good patch text per
bug.
"""
from __future__ import annotations

import json
from pathlib import Path

from conftest import commit_hash, make_bug
from repairstack.core import BugType, FunctionSpan, save_manifest
from repairstack.llm import MockRule, ScriptedMockProvider
from repairstack.pipeline import RunConfig
from repairstack.sandbox import MockSandbox

GOOD_PATCH = {
    "bug-a": "def shift(value):\n    return value + 1",
    "bug-b": "def scale(value):\n    return value * 3",
}

BAD_RESPONSE = "```\ndef broken():\n    return None\n```\n"


def _checkout(root: Path, bug_id: str, function: str) -> None:
    checkout = root / bug_id
    (checkout / "tests").mkdir(parents=True)
    (checkout / "app.py").write_text(
        f'"""Module for {bug_id}."""\n\n\n\n{function}\n',
        encoding="utf-8",
    )
    (checkout / "tests" / "test_app.py").write_text(
        "from app import *\n\n\ndef test_behavior():\n    assert False\n",
        encoding="utf-8",
    )


def _history(root: Path, bug_id: str, commits: list[dict]) -> None:
    path = root / f"{bug_id}.history.jsonl"
    with path.open("w", encoding="utf-8") as handle:
        for commit in commits:
            handle.write(json.dumps(commit) + "\n")


def build_workspace(tmp_path: Path, n: int = 4) -> tuple[RunConfig, ScriptedMockProvider]:
    root = tmp_path / "repos"
    root.mkdir(parents=True)

    _checkout(root, "bug-a", "def shift(value):\n    return value - 1")
    _checkout(root, "bug-b", "def scale(value):\n    return value * 2")
    _checkout(root, "bug-c", "def narrow(value):\n    return value")

    # bug B's history: a co-occurring test file plus a latest-change commit
    # whose message carries the MARKER-L2 token the provider keys on
    _history(
        root,
        "bug-b",
        [
            {
                "hash": commit_hash("b-c1"),
                "author_date": "2021-01-01T00:00:00+00:00",
                "message": "seed module",
                "files": ["app.py", "tests/test_app.py"],
                "hunks": {"app.py": [{"old_start": 0, "old_len": 0, "new_start": 1, "new_len": 6}]},
            },
            {
                "hash": commit_hash("b-c2"),
                "author_date": "2021-02-01T00:00:00+00:00",
                "message": "MARKER-L2 adjust scaling factor",
                "files": ["app.py"],
                "hunks": {
                    "app.py": [
                        {
                            "old_start": 5,
                            "old_len": 2,
                            "new_start": 5,
                            "new_len": 2,
                            "lines": ["-    return value * 4", "+    return value * 2"],
                        }
                    ]
                },
            },
            {
                "hash": commit_hash("bug-b-fix"),
                "author_date": "2021-03-01T00:00:00+00:00",
                "message": "the fix",
                "files": ["app.py"],
            },
        ],
    )

    spans = {
        "bug-a": FunctionSpan(file_path="app.py", qualified_name="app.shift", start_line=5, end_line=6),
        "bug-b": FunctionSpan(file_path="app.py", qualified_name="app.scale", start_line=5, end_line=6),
        "bug-c": FunctionSpan(file_path="app.py", qualified_name="app.narrow", start_line=5, end_line=6),
    }
    bugs = [
        make_bug(
            bug_id,
            project="esc",
            buggy_commit=commit_hash(f"{bug_id}-buggy"),
            fix_commit=commit_hash(f"{bug_id}-fix"),
            span=spans[bug_id],
            failing_tests=("tests/test_app.py::test_behavior",),
            error_info=f"AssertionError raised for {bug_id}",
            bug_type=BugType.NETWORK if bug_id == "bug-b" else BugType.PROGRAM_ANOMALY,
        )
        for bug_id in ("bug-a", "bug-b", "bug-c")
    ]
    manifest = tmp_path / "manifest.jsonl"
    save_manifest(bugs, manifest)

    provider = ScriptedMockProvider(
        rules=[
            MockRule(contains="def shift(value):", responses=(f"```\n{GOOD_PATCH['bug-a']}\n```\n",)),
            MockRule(contains="MARKER-L2", responses=(f"```\n{GOOD_PATCH['bug-b']}\n```\n",)),
        ],
        default=BAD_RESPONSE,
    )

    config = RunConfig(
        manifest=manifest,
        repos_root=root,
        output_dir=tmp_path / "out",
        n=n,
        k_values=(1, 3),
        parallelism=1,
    )
    return config, provider


def sandbox_factory(checkout: Path) -> MockSandbox:
    """Scripted sandbox: a patch passes exactly when it matches the known-good text."""
    bug_id = Path(checkout).name

    def handler(request):
        patch = request.get("patch")
        good = GOOD_PATCH.get(bug_id)
        passed = patch is not None and good is not None and patch["new_source"] == good
        return {
            "status": "ok",
            "tests": [
                {"id": test_id, "passed": passed, "failure_text": "" if passed else "still failing"}
                for test_id in request["tests"]
            ],
            "duration_s": 0.0,
        }

    return MockSandbox(handler)
