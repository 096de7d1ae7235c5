"""Deterministic, cumulative prompt assembly and token-budget enforcement.

Sections follow one canonical order; each layer's prompt is a superset of the
previous layer's sections for the same bug. Token counts are estimated as
ceil(chars / 4) so budgeting stays provider-agnostic; exact tokenizers can be
plugged in where a provider needs them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .bug_knowledge import BugContext
from .core import Layer, ValueCase
from .project_knowledge import ProjectContext
from .repo_knowledge import RepoContext
from .templates import load_preamble, load_section_headers

PREAMBLE_ID = "preamble"

# Canonical section order (preamble first, then layer 1 through layer 3).
SECTION_ORDER = (
    PREAMBLE_ID,
    "imports",
    "issue",
    "buggy_function",
    "failing_tests",
    "error_info",
    "runtime_values",
    "angelic_values",
    "called_definitions",
    "caller_usages",
    "last_commit",
    "doc_insights",
    "issue_insights",
)

# Reverse-priority drop order for budget enforcement; the preamble, the
# imports, and the buggy function itself are never dropped.
DROP_ORDER = (
    "angelic_values",
    "runtime_values",
    "issue_insights",
    "doc_insights",
    "last_commit",
    "caller_usages",
    "called_definitions",
    "error_info",
    "failing_tests",
    "issue",
)

LAYER_SECTIONS = {
    Layer.L1: frozenset(SECTION_ORDER[:8]),
    Layer.L2: frozenset(SECTION_ORDER[:11]),
    Layer.L3: frozenset(SECTION_ORDER),
}

DEFAULT_TOKEN_BUDGET = 120_000


class PromptConfigurationError(ValueError):
    """Layer/context mismatch handed to the builder."""


class UnbudgetableError(ValueError):
    """Mandatory sections alone exceed the token budget."""


@dataclass(frozen=True)
class Section:
    section_id: str
    header: str
    body: str

    def render(self) -> str:
        if not self.header:
            return self.body
        return f"## {self.header}\n\n{self.body}"


@dataclass(frozen=True)
class Prompt:
    layer: Layer
    sections: tuple[Section, ...]

    def __post_init__(self) -> None:
        positions = [SECTION_ORDER.index(section.section_id) for section in self.sections]
        if positions != sorted(positions) or len(set(positions)) != len(positions):
            raise ValueError("sections must follow the canonical order, without duplicates")

    def render(self) -> str:
        text = "\n\n".join(section.render() for section in self.sections) + "\n"
        return text.replace("\r\n", "\n").replace("\r", "\n")

    @property
    def estimated_tokens(self) -> int:
        return estimate_tokens(self.render())

    @property
    def section_ids(self) -> tuple[str, ...]:
        return tuple(section.section_id for section in self.sections)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def _fence(code: str) -> str:
    return f"```\n{code.rstrip()}\n```"


def _render_cases(cases: Sequence[ValueCase]) -> str:
    blocks = []
    for index, case in enumerate(cases, start=1):
        lines = [f"Case {index}:"]
        lines.extend(f"  {v.name} = {v.value} ({v.type_name})" for v in case.variables)
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def _layer1_sections(bug_ctx: BugContext) -> dict[str, str]:
    bodies: dict[str, str] = {}
    if bug_ctx.imports:
        bodies["imports"] = "\n".join(bug_ctx.imports)
    if bug_ctx.issue_title is not None or bug_ctx.issue_body is not None:
        parts = [part for part in (bug_ctx.issue_title, bug_ctx.issue_body) if part]
        bodies["issue"] = "\n\n".join(parts)
    bodies["buggy_function"] = _fence(bug_ctx.buggy_source)
    if bug_ctx.failing_test_sources:
        bodies["failing_tests"] = "\n\n".join(
            f"Test {test_id}:\n{_fence(source)}" for test_id, source in bug_ctx.failing_test_sources
        )
    if bug_ctx.error_info:
        bodies["error_info"] = _fence(bug_ctx.error_info)
    if bug_ctx.runtime_cases:
        bodies["runtime_values"] = _render_cases(bug_ctx.runtime_cases)
    if bug_ctx.angelic_cases:
        bodies["angelic_values"] = _render_cases(bug_ctx.angelic_cases)
    return bodies


def _layer2_sections(repo_ctx: RepoContext) -> dict[str, str]:
    bodies: dict[str, str] = {}
    if repo_ctx.dependencies.called_definitions:
        bodies["called_definitions"] = "\n\n".join(
            f"{d.qualified_name} (from {d.file_path}):\n{_fence(d.source)}"
            for d in repo_ctx.dependencies.called_definitions
        )
    if repo_ctx.dependencies.caller_definitions:
        bodies["caller_usages"] = "\n\n".join(
            f"{d.qualified_name} (from {d.file_path}):\n{_fence(d.source)}"
            for d in repo_ctx.dependencies.caller_definitions
        )
    if repo_ctx.latest_change is not None:
        change = repo_ctx.latest_change
        bodies["last_commit"] = (
            f"Commit {change.commit_hash} ({change.author_date.isoformat()}):\n"
            f"{change.message}\n{_fence(change.function_diff)}"
        )
    return bodies


def _layer3_sections(proj_ctx: ProjectContext) -> dict[str, str]:
    bodies: dict[str, str] = {}
    if proj_ctx.doc_insights is not None and proj_ctx.doc_insights.answers:
        bodies["doc_insights"] = "\n\n".join(
            f"Q: {a.question}\nA: {a.answer}" for a in proj_ctx.doc_insights.answers
        )
    if proj_ctx.issue_insights is not None and proj_ctx.issue_insights.answers:
        bodies["issue_insights"] = "\n\n".join(
            f"Q: {a.question}\nA: {a.answer}" for a in proj_ctx.issue_insights.answers
        )
    return bodies


def build_prompt(
    layer: Layer,
    bug_ctx: BugContext,
    repo_ctx: RepoContext | None = None,
    proj_ctx: ProjectContext | None = None,
    *,
    preamble_override: str | None = None,
    headers_override: str | None = None,
) -> Prompt:
    """Assemble the cumulative prompt for ``layer``; byte-identical for equal inputs.

    ``repo_ctx`` is required from layer 2 up, ``proj_ctx`` exactly at layer 3;
    anything else is a configuration mismatch. Absent optional data omits its
    section entirely.
    """
    if (repo_ctx is not None) != (layer.order >= 2):
        raise PromptConfigurationError(f"repo context required iff layer >= L2, got {layer.value}")
    if (proj_ctx is not None) != (layer is Layer.L3):
        raise PromptConfigurationError(f"project context required iff layer is L3, got {layer.value}")

    headers = load_section_headers(headers_override)
    bodies = _layer1_sections(bug_ctx)
    if repo_ctx is not None:
        bodies.update(_layer2_sections(repo_ctx))
    if proj_ctx is not None:
        bodies.update(_layer3_sections(proj_ctx))

    sections = [Section(PREAMBLE_ID, "", load_preamble(preamble_override))]
    for section_id in SECTION_ORDER[1:]:
        if section_id in bodies:
            sections.append(Section(section_id, headers[section_id], bodies[section_id]))
    return Prompt(layer=layer, sections=tuple(sections))


def enforce_budget(prompt: Prompt, max_tokens: int = DEFAULT_TOKEN_BUDGET) -> Prompt:
    """Drop whole sections in fixed reverse-priority order until within budget.

    The preamble, the imports, and the buggy function survive unconditionally;
    if they alone exceed the budget the prompt is unbudgetable.
    """
    if prompt.estimated_tokens <= max_tokens:
        return prompt
    sections = list(prompt.sections)
    for drop_id in DROP_ORDER:
        sections = [section for section in sections if section.section_id != drop_id]
        candidate = Prompt(layer=prompt.layer, sections=tuple(sections))
        if candidate.estimated_tokens <= max_tokens:
            return candidate
    raise UnbudgetableError(
        f"mandatory sections need {Prompt(layer=prompt.layer, sections=tuple(sections)).estimated_tokens} "
        f"tokens, over the {max_tokens} budget"
    )
