"""Client side of the sandbox protocol.

One request and one response per line, JSON-encoded, over the agent's standard
input/output. Request/response field names are fixed by the protocol:

    {"action": "run_tests", "workdir": ..., "patch": {"file", "start_line",
     "end_line", "new_source"} | null, "tests": [...], "timeout_s": ...}
    -> {"status": ..., "tests": [{"id", "passed", "failure_text"}], "duration_s": ...}

    {"action": "trace", "workdir": ..., "patch": null, "tests": [...], "timeout_s": ...}
    -> {"status": ..., "variables": [{"name", "value", "type"}]}

The in-process :class:`MockSandbox` lets the whole pipeline run without any
agent installed; tests script it with a handler function.
"""
from __future__ import annotations

import json
import subprocess
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence


class SandboxError(RuntimeError):
    """Transport-level sandbox failure (unreachable agent, broken pipe, bad JSON)."""


class Sandbox(Protocol):
    def run(self, request: dict[str, Any]) -> dict[str, Any]: ...


class MockSandbox:
    """Scripted sandbox: ``handler`` maps a request dict to a response dict."""

    def __init__(self, handler: Callable[[dict[str, Any]], dict[str, Any]]):
        self._handler = handler
        self.requests: list[dict[str, Any]] = []

    def run(self, request: dict[str, Any]) -> dict[str, Any]:
        self.requests.append(request)
        return self._handler(request)


class ProcessSandbox:
    """Sandbox agent as a child process, checkout path appended to the command."""

    def __init__(self, command: Sequence[str], checkout: str | Path):
        self.command = [*command, str(checkout)]
        self._process: subprocess.Popen[str] | None = None

    def _ensure_process(self) -> subprocess.Popen[str]:
        if self._process is None or self._process.poll() is not None:
            self._process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._process

    def run(self, request: dict[str, Any]) -> dict[str, Any]:
        process = self._ensure_process()
        assert process.stdin is not None and process.stdout is not None
        try:
            process.stdin.write(json.dumps(request) + "\n")
            process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SandboxError(f"sandbox agent unreachable: {exc}") from exc
        line = process.stdout.readline()
        if not line:
            raise SandboxError("sandbox agent closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise SandboxError(f"sandbox agent sent malformed response: {line!r}") from exc

    def close(self) -> None:
        if self._process is not None and self._process.poll() is None:
            assert self._process.stdin is not None
            self._process.stdin.close()
            self._process.wait(timeout=10)
        self._process = None

    def __enter__(self) -> "ProcessSandbox":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def run_tests_request(
    workdir: str | Path,
    tests: Sequence[str],
    *,
    patch: dict[str, Any] | None = None,
    timeout_s: float = 300.0,
) -> dict[str, Any]:
    """Build a run_tests request with the protocol's exact field names."""
    return {
        "action": "run_tests",
        "workdir": str(workdir),
        "patch": patch,
        "tests": list(tests),
        "timeout_s": timeout_s,
    }


def trace_request(
    workdir: str | Path,
    tests: Sequence[str],
    *,
    file: str,
    start_line: int,
    end_line: int,
    timeout_s: float = 300.0,
) -> dict[str, Any]:
    """Build a trace request; the patch object locates the function, new_source stays null."""
    return {
        "action": "trace",
        "workdir": str(workdir),
        "patch": {
            "file": file,
            "start_line": start_line,
            "end_line": end_line,
            "new_source": None,
        },
        "tests": list(tests),
        "timeout_s": timeout_s,
    }
