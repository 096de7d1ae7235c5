"""Provider-agnostic completion sampling with a deterministic scripted mock.

Two built-in providers: a generic chat-completion HTTP endpoint (OpenAI-style
request/response shape, credentials via environment variable) and a scripted
mock that is a pure function of (prompt, sample index). Every request/response
pair is persisted to a line-delimited run log for auditability and replay.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol, Sequence

from .core import Layer


class TransportError(RuntimeError):
    """Provider kept failing after bounded retries."""


class ProviderConfigurationError(RuntimeError):
    """Missing or unusable provider configuration (names the offending variable)."""


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    n: int = 10
    temperature: float = 0.8
    max_output_tokens: int = 2048
    model: str = "default"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class CompletionBatch:
    """Exactly ``request.n`` responses plus provider metadata."""

    responses: tuple[str, ...]
    latency_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class CompletionProvider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionBatch: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MockRule:
    """First rule whose substring occurs in the prompt supplies the responses."""

    contains: str
    responses: tuple[str, ...]


class ScriptedMockProvider:
    """Deterministic provider: response depends only on (prompt, sample index).

    Rules are checked in order; a matching rule's responses cycle by sample
    index, the default responses cycle otherwise.
    """

    def __init__(self, rules: Sequence[MockRule] = (), default: str | Sequence[str] = ""):
        self.rules = tuple(rules)
        self.default = (default,) if isinstance(default, str) else tuple(default)
        if not self.default:
            self.default = ("",)

    @classmethod
    def from_script(cls, path: str | Path) -> "ScriptedMockProvider":
        """Load rules from a JSON script: {"default": ..., "rules": [{"contains", "response"}]}."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = []
        for rule in raw.get("rules", ()):
            responses = rule["response"]
            responses = (responses,) if isinstance(responses, str) else tuple(responses)
            rules.append(MockRule(contains=rule["contains"], responses=responses))
        default = raw.get("default", "")
        return cls(rules=rules, default=default)

    def response_for(self, prompt: str, sample_index: int) -> str:
        for rule in self.rules:
            if rule.contains in prompt:
                return rule.responses[sample_index % len(rule.responses)]
        return self.default[sample_index % len(self.default)]

    def complete(self, request: CompletionRequest) -> CompletionBatch:
        responses = tuple(self.response_for(request.prompt, i) for i in range(request.n))
        return CompletionBatch(responses=responses)


class HttpChatProvider:
    """Generic chat-completion endpoint speaking the OpenAI-style JSON shape.

    Request: {"model", "messages": [{"role": "user", "content": prompt}],
    "n", "temperature", "max_tokens"}; response: {"choices": [{"message":
    {"content": ...}}, ...], "usage": {...}}. The API key is read from the
    environment, never from configuration files.
    """

    def __init__(
        self,
        url: str,
        *,
        api_key_var: str = "REPAIRSTACK_API_KEY",
        timeout_s: float = 120.0,
        max_retries: int = 3,
        backoff_s: float = 1.0,
        session: Any = None,
    ):
        import requests

        self.url = url
        self.api_key_var = api_key_var
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._session = session or requests.Session()

    def complete(self, request: CompletionRequest) -> CompletionBatch:
        api_key = os.environ.get(self.api_key_var)
        if not api_key:
            raise ProviderConfigurationError(
                f"no API credential found: set the {self.api_key_var} environment variable"
            )
        payload = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "n": request.n,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {api_key}"}
        started = time.monotonic()
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = self._session.post(self.url, json=payload, headers=headers, timeout=self.timeout_s)
                response.raise_for_status()
                data = response.json()
                responses = tuple(choice["message"]["content"] for choice in data["choices"])
                if len(responses) != request.n:
                    raise TransportError(
                        f"provider returned {len(responses)} responses for n={request.n}"
                    )
                usage = data.get("usage", {})
                return CompletionBatch(
                    responses=responses,
                    latency_s=time.monotonic() - started,
                    prompt_tokens=usage.get("prompt_tokens", 0),
                    completion_tokens=usage.get("completion_tokens", 0),
                )
            except TransportError:
                raise
            except Exception as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise TransportError(f"completion endpoint failed after {self.max_retries} attempts: {last_error}")


class RunLog:
    """Append-only line-delimited record of every sampled completion."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def load(self) -> list[dict[str, Any]]:
        if not self.path.exists():
            return []
        records = []
        with self.path.open("r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    records.append(json.loads(line))
        return records


class LlmClient:
    """Completion front door: bounded concurrency, bounded retries, run logging."""

    def __init__(
        self,
        provider: CompletionProvider,
        run_log: RunLog | None = None,
        *,
        max_in_flight: int = 4,
        max_retries: int = 3,
        backoff_s: float = 0.5,
    ):
        self.provider = provider
        self.run_log = run_log
        self._slots = threading.Semaphore(max_in_flight)
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    def complete(self, request: CompletionRequest, *, bug_id: str = "", layer: Layer | None = None) -> CompletionBatch:
        last_error: TransportError | None = None
        with self._slots:
            for attempt in range(self.max_retries):
                try:
                    batch = self.provider.complete(request)
                    break
                except TransportError as exc:
                    last_error = exc
                    if attempt + 1 < self.max_retries:
                        time.sleep(self.backoff_s * (2**attempt))
            else:
                raise TransportError(f"completion failed after {self.max_retries} attempts: {last_error}")
        if len(batch.responses) != request.n:
            raise TransportError(f"provider returned {len(batch.responses)} responses for n={request.n}")
        if self.run_log is not None:
            digest = prompt_hash(request.prompt)
            for index, response in enumerate(batch.responses):
                self.run_log.append(
                    {
                        "bug_id": bug_id,
                        "layer": layer.value if layer else None,
                        "sample_index": index,
                        "prompt_hash": digest,
                        "response": response,
                        "model": request.model,
                        "temperature": request.temperature,
                        "latency_s": batch.latency_s,
                    }
                )
        return batch
