"""Job execution: patch application, test runs, and variable tracing.

Every job works on a scratch copy of the prepared checkout; the checkout
itself is never written to. Tests run as ``python -m pytest <id>`` child
processes with the scratch root on PYTHONPATH, one process per test id, each
bounded by the job's timeout.
"""
from __future__ import annotations

import json
import os
import shutil
import subprocess
import sys
import tempfile
import time
from pathlib import Path
from typing import Any

VALUE_RENDER_BOUND = 500

TRACE_PLUGIN_NAME = "_repairbox_trace"

# Installed into the scratch copy and activated with ``pytest -p``; captures
# the target function's frame locals at entry and exit of its first
# invocation, rendering values as bounded repr text.
TRACE_PLUGIN_SOURCE = '''
import json
import os
import sys

_TARGET = os.environ["REPAIRBOX_TRACE_FILE"]
_START = int(os.environ["REPAIRBOX_TRACE_START"])
_END = int(os.environ["REPAIRBOX_TRACE_END"])
_OUT = os.environ["REPAIRBOX_TRACE_OUT"]
_BOUND = int(os.environ["REPAIRBOX_TRACE_BOUND"])

_records = []
_done = False


def _render(value):
    try:
        text = repr(value)
    except Exception:
        text = "<unrepresentable>"
    if len(text) > _BOUND:
        text = text[:_BOUND] + "..."
    return text


def _capture(frame):
    for name, value in frame.f_locals.items():
        _records.append({"name": name, "value": _render(value), "type": type(value).__name__})


def _local_trace(frame, event, arg):
    global _done
    if event == "return" and not _done:
        _capture(frame)
        _done = True
    return _local_trace


def _global_trace(frame, event, arg):
    if _done or event != "call":
        return None
    code = frame.f_code
    if code.co_name.startswith("<"):
        return None  # module bodies, comprehensions, lambdas
    if code.co_filename.endswith(_TARGET) and _START <= code.co_firstlineno <= _END:
        _capture(frame)
        return _local_trace
    return None


def pytest_configure(config):
    sys.settrace(_global_trace)


def pytest_unconfigure(config):
    sys.settrace(None)
    with open(_OUT, "w", encoding="utf-8") as handle:
        json.dump(_records, handle)
'''


class SpliceFailure(Exception):
    pass


def splice_lines(source: str, start_line: int, end_line: int, new_source: str) -> str:
    """Replace lines [start_line, end_line] with ``new_source``, rest untouched."""
    if not new_source:
        raise SpliceFailure("replacement source must be non-empty")
    if start_line < 1 or start_line > end_line:
        raise SpliceFailure(f"bad span [{start_line}, {end_line}]")
    lines = source.splitlines(keepends=True)
    if end_line > len(lines):
        raise SpliceFailure(f"span [{start_line}, {end_line}] exceeds the {len(lines)}-line file")
    replacement = new_source
    tail = lines[end_line:]
    if tail and not replacement.endswith(("\n", "\r\n", "\r")):
        replacement += "\n"
    return "".join(lines[: start_line - 1]) + replacement + "".join(tail)


def _make_scratch(workdir: Path) -> Path:
    scratch = Path(tempfile.mkdtemp(prefix="repairbox-"))
    target = scratch / "checkout"
    shutil.copytree(workdir, target, symlinks=True)
    return target


def _apply_patch(scratch: Path, patch: dict[str, Any]) -> None:
    target = scratch / patch["file"]
    if not target.is_file():
        raise SpliceFailure(f"patched file not found: {patch['file']}")
    with target.open("r", encoding="utf-8", newline="") as handle:
        source = handle.read()
    patched = splice_lines(source, patch["start_line"], patch["end_line"], patch["new_source"])
    with target.open("w", encoding="utf-8", newline="") as handle:
        handle.write(patched)


def _pytest_env(scratch: Path) -> dict[str, str]:
    env = dict(os.environ)
    existing = env.get("PYTHONPATH")
    env["PYTHONPATH"] = str(scratch) + (os.pathsep + existing if existing else "")
    return env


def _run_single_test(
    scratch: Path, test_id: str, timeout_s: float, extra_args: list[str] | None = None
) -> dict[str, Any]:
    command = [
        sys.executable,
        "-m",
        "pytest",
        test_id,
        "-q",
        "--no-header",
        "-p",
        "no:cacheprovider",
        *(extra_args or []),
    ]
    completed = subprocess.run(
        command,
        cwd=scratch,
        env=_pytest_env(scratch),
        capture_output=True,
        text=True,
        timeout=timeout_s,
    )
    output = (completed.stdout + completed.stderr).strip()
    if completed.returncode == 0:
        return {"id": test_id, "passed": True, "failure_text": ""}
    if completed.returncode in (1, 4, 5):
        return {"id": test_id, "passed": False, "failure_text": output[-4000:]}
    raise InterpreterCrash(test_id, completed.returncode, output)


class InterpreterCrash(Exception):
    def __init__(self, test_id: str, returncode: int, output: str):
        super().__init__(f"test {test_id} crashed the interpreter (rc={returncode})")
        self.test_id = test_id
        self.returncode = returncode
        self.output = output


def run_tests(job: dict[str, Any]) -> dict[str, Any]:
    """Apply the patch (if any) to a scratch copy and run the listed tests."""
    workdir = Path(job["workdir"])
    timeout_s = float(job.get("timeout_s", 300.0))
    started = time.monotonic()
    scratch = _make_scratch(workdir)
    try:
        patch = job.get("patch")
        if patch is not None and patch.get("new_source") is not None:
            try:
                _apply_patch(scratch, patch)
            except SpliceFailure as exc:
                return {"status": "splice_error", "error": str(exc), "tests": [], "duration_s": 0.0}
        results = []
        for test_id in job.get("tests", []):
            try:
                results.append(_run_single_test(scratch, test_id, timeout_s))
            except subprocess.TimeoutExpired:
                return {
                    "status": "timeout",
                    "error": f"test {test_id} exceeded {timeout_s}s",
                    "tests": results,
                    "duration_s": time.monotonic() - started,
                }
            except InterpreterCrash as crash:
                return {
                    "status": "crash",
                    "error": str(crash),
                    "output": crash.output[-4000:],
                    "tests": results,
                    "duration_s": time.monotonic() - started,
                }
        return {"status": "ok", "tests": results, "duration_s": time.monotonic() - started}
    finally:
        shutil.rmtree(scratch.parent, ignore_errors=True)


def trace(job: dict[str, Any]) -> dict[str, Any]:
    """Run the failing test under a tracer around the span's function.

    Captures parameters at entry and locals at exit of the first invocation;
    values render as repr text capped at VALUE_RENDER_BOUND characters.
    """
    workdir = Path(job["workdir"])
    patch = job.get("patch") or {}
    if not patch.get("file"):
        return {"status": "error", "error": "trace requires patch.file and the span lines", "variables": []}
    timeout_s = float(job.get("timeout_s", 300.0))
    scratch = _make_scratch(workdir)
    try:
        plugin_path = scratch / f"{TRACE_PLUGIN_NAME}.py"
        plugin_path.write_text(TRACE_PLUGIN_SOURCE, encoding="utf-8")
        out_path = scratch / "_repairbox_trace_out.json"
        os_env = {
            "REPAIRBOX_TRACE_FILE": str(Path(patch["file"])),
            "REPAIRBOX_TRACE_START": str(patch["start_line"]),
            "REPAIRBOX_TRACE_END": str(patch["end_line"]),
            "REPAIRBOX_TRACE_OUT": str(out_path),
            "REPAIRBOX_TRACE_BOUND": str(VALUE_RENDER_BOUND),
        }
        records: list[dict[str, Any]] = []
        for test_id in job.get("tests", []):
            env = _pytest_env(scratch)
            env.update(os_env)
            try:
                subprocess.run(
                    [
                        sys.executable,
                        "-m",
                        "pytest",
                        test_id,
                        "-q",
                        "--no-header",
                        "-p",
                        "no:cacheprovider",
                        "-p",
                        TRACE_PLUGIN_NAME,
                    ],
                    cwd=scratch,
                    env=env,
                    capture_output=True,
                    text=True,
                    timeout=timeout_s,
                )
            except subprocess.TimeoutExpired:
                return {"status": "timeout", "error": f"trace of {test_id} exceeded {timeout_s}s", "variables": []}
            if out_path.exists():
                records = json.loads(out_path.read_text(encoding="utf-8"))
                if records:
                    break
        variables: list[dict[str, str]] = []
        seen: dict[str, int] = {}
        for record in records:
            entry = {"name": record["name"], "value": record["value"], "type": record["type"]}
            if record["name"] in seen:
                variables[seen[record["name"]]] = entry  # exit value wins
            else:
                seen[record["name"]] = len(variables)
                variables.append(entry)
        response: dict[str, Any] = {"status": "ok", "variables": variables}
        if not variables:
            response["note"] = "function never invoked by the listed tests"
        return response
    finally:
        shutil.rmtree(scratch.parent, ignore_errors=True)
