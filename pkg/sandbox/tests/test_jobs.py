from __future__ import annotations

import pytest

from conftest import GOOD_PATCH, tree_digest
from repairbox.jobs import SpliceFailure, run_tests, splice_lines, trace

FAILING_TEST = "tests/test_calculator.py::test_add_one"
PASSING_TEST = "tests/test_calculator.py::test_type"


def patch_for(new_source: str | None) -> dict:
    return {"file": "calculator.py", "start_line": 1, "end_line": 2, "new_source": new_source}


def job(workdir, tests, patch=None, timeout_s=60.0, action="run_tests") -> dict:
    return {
        "action": action,
        "workdir": str(workdir),
        "patch": patch,
        "tests": list(tests),
        "timeout_s": timeout_s,
    }


def test_splice_lines_replaces_range():
    source = "a\nb\nc\nd\n"
    assert splice_lines(source, 2, 3, "X\nY") == "a\nX\nY\nd\n"


def test_splice_lines_out_of_range():
    with pytest.raises(SpliceFailure):
        splice_lines("a\nb\n", 1, 3, "x")


def test_unpatched_passing_test_passes(planted_project):
    response = run_tests(job(planted_project, [PASSING_TEST]))
    assert response["status"] == "ok"
    assert response["tests"] == [{"id": PASSING_TEST, "passed": True, "failure_text": ""}]


def test_unpatched_failing_test_fails_with_output(planted_project):
    response = run_tests(job(planted_project, [FAILING_TEST]))
    assert response["status"] == "ok"
    (result,) = response["tests"]
    assert result["passed"] is False
    assert "assert" in result["failure_text"]


def test_known_good_patch_turns_failing_into_passing(planted_project):
    before = run_tests(job(planted_project, [FAILING_TEST]))
    after = run_tests(job(planted_project, [FAILING_TEST, PASSING_TEST], patch=patch_for(GOOD_PATCH)))
    assert before["tests"][0]["passed"] is False
    assert after["status"] == "ok"
    assert all(result["passed"] for result in after["tests"])


def test_patch_application_failure_reports_splice_error(planted_project):
    bad_patch = {"file": "calculator.py", "start_line": 1, "end_line": 99, "new_source": "x = 1"}
    response = run_tests(job(planted_project, [FAILING_TEST], patch=bad_patch))
    assert response["status"] == "splice_error"


def test_patch_against_missing_file_is_splice_error(planted_project):
    bad_patch = {"file": "absent.py", "start_line": 1, "end_line": 1, "new_source": "x = 1"}
    response = run_tests(job(planted_project, [FAILING_TEST], patch=bad_patch))
    assert response["status"] == "splice_error"


def test_timeout_on_sleeping_test(planted_project):
    (planted_project / "tests" / "test_slow.py").write_text(
        "import time\n\n\ndef test_sleepy():\n    time.sleep(5)\n", encoding="utf-8"
    )
    response = run_tests(job(planted_project, ["tests/test_slow.py::test_sleepy"], timeout_s=1.0))
    assert response["status"] == "timeout"


def test_checkout_untouched_by_jobs(planted_project):
    digest = tree_digest(planted_project)
    run_tests(job(planted_project, [FAILING_TEST], patch=patch_for(GOOD_PATCH)))
    run_tests(job(planted_project, [FAILING_TEST]))
    run_tests(job(planted_project, [FAILING_TEST], patch=patch_for("broken(")))
    trace(job(planted_project, [FAILING_TEST], patch=patch_for(None), action="trace"))
    assert tree_digest(planted_project) == digest


def test_trace_captures_parameter_value(planted_project):
    response = trace(job(planted_project, [FAILING_TEST], patch=patch_for(None), action="trace"))
    assert response["status"] == "ok"
    by_name = {record["name"]: record for record in response["variables"]}
    assert by_name["x"] == {"name": "x", "value": "3", "type": "int"}


def test_trace_function_never_invoked(planted_project):
    (planted_project / "tests" / "test_other.py").write_text(
        "def test_unrelated():\n    assert True\n", encoding="utf-8"
    )
    response = trace(
        job(planted_project, ["tests/test_other.py::test_unrelated"], patch=patch_for(None), action="trace")
    )
    assert response["status"] == "ok"
    assert response["variables"] == []
    assert "note" in response


def test_trace_renders_long_values_with_ellipsis(planted_project):
    (planted_project / "calculator.py").write_text(
        "def add_one(x):\n    big = 'a' * 2000\n    return x - 1\n", encoding="utf-8"
    )
    response = trace(
        job(
            planted_project,
            [FAILING_TEST],
            patch={"file": "calculator.py", "start_line": 1, "end_line": 3, "new_source": None},
            action="trace",
        )
    )
    by_name = {record["name"]: record for record in response["variables"]}
    assert by_name["big"]["value"].endswith("...")
    assert len(by_name["big"]["value"]) == 503  # 500-char bound plus the marker
