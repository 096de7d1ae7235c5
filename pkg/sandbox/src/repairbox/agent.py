"""Protocol loop: one JSON request per stdin line, one JSON response per stdout line.

Requests: {"action": "run_tests" | "trace", "workdir", "patch", "tests",
"timeout_s"}. Malformed input yields a structured error response, never a
crash; the process exits on end of input. Strictly one job at a time.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from .jobs import run_tests, trace

ACTIONS = {"run_tests": run_tests, "trace": trace}


def handle_request(request: Any, default_workdir: str | None = None) -> dict[str, Any]:
    """Validate and dispatch one request; always returns a response dict."""
    if not isinstance(request, dict):
        return {"status": "error", "error": "request must be a JSON object"}
    action = request.get("action")
    handler = ACTIONS.get(action)
    if handler is None:
        return {"status": "error", "error": f"unknown action {action!r}"}
    workdir = request.get("workdir") or default_workdir
    if not workdir:
        return {"status": "error", "error": "request is missing workdir"}
    if not Path(workdir).is_dir():
        return {"status": "error", "error": f"workdir does not exist: {workdir}"}
    job = dict(request)
    job["workdir"] = workdir
    try:
        return handler(job)
    except Exception as exc:  # a job must never take the agent down
        return {"status": "error", "error": f"{type(exc).__name__}: {exc}"}


def serve(stdin=None, stdout=None, default_workdir: str | None = None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            response = {"status": "error", "error": f"malformed request: {exc}"}
        else:
            response = handle_request(request, default_workdir)
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="repairbox", description=__doc__)
    parser.add_argument("checkout", nargs="?", help="default workdir for requests that omit one")
    args = parser.parse_args(argv)
    serve(default_workdir=args.checkout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
