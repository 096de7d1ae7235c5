"""Loaders for the editable text templates shipped with the package.

Templates live under ``repairstack/templates/``; every loader accepts an
override path so projects can swap wording without touching code.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path


def _read_template(name: str, override: str | Path | None = None) -> str:
    if override is not None:
        return Path(override).read_text(encoding="utf-8")
    return resources.files("repairstack").joinpath("templates", name).read_text(encoding="utf-8")


def load_question_templates(name: str, override: str | Path | None = None) -> list[str]:
    """Question templates, one per non-comment line, ``{function}`` placeholder."""
    lines = _read_template(name, override).splitlines()
    questions = [line.strip() for line in lines if line.strip() and not line.lstrip().startswith("#")]
    if not questions:
        raise ValueError(f"template {name} defines no questions")
    return questions


def load_preamble(override: str | Path | None = None) -> str:
    return _read_template("prompt_preamble.txt", override).rstrip("\n")


def load_section_headers(override: str | Path | None = None) -> dict[str, str]:
    """Section id -> header text; file order is the canonical prompt order."""
    headers: dict[str, str] = {}
    for line in _read_template("prompt_sections.txt", override).splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        section_id, _, header = stripped.partition("=")
        headers[section_id.strip()] = header.strip()
    return headers
