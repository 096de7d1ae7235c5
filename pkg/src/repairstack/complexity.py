"""Function-level complexity metrics and the fixed-vs-unresolved comparison.

Decision points counted toward cyclomatic complexity: each ``if``/``elif``
clause, each ``for``/``while`` loop header (``else`` clauses add nothing),
each ``except`` clause, each ``and``/``or`` occurrence, each conditional
expression, and each ``if`` filter inside a comprehension. Comprehension
generators themselves are not counted.

Halstead token classification (exhaustive; see docs/halstead_token_classes.md
for the same table with rationale):

* operands  — NAME tokens that are not keywords (soft keywords such as
  ``match`` included, since the tokenizer cannot tell them apart from names),
  NUMBER tokens, STRING tokens, and the ellipsis literal ``...``.
* operators — every hard keyword, and every OP token except the grouping and
  separator set ``( ) [ ] { } , ; :`` and ``...``.
* neither   — grouping/separator OP tokens listed above, NEWLINE, NL, INDENT,
  DEDENT, COMMENT, ENCODING, ENDMARKER.
"""
from __future__ import annotations

import ast
import io
import keyword
import math
import textwrap
import tokenize
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .evaluation import cohens_d, mann_whitney_u

_PUNCTUATION = {"(", ")", "[", "]", "{", "}", ",", ";", ":", "..."}


class SourceParseError(ValueError):
    """Function source that does not parse; carries the syntax error location."""

    def __init__(self, exc: SyntaxError):
        super().__init__(f"source does not parse at line {exc.lineno}, column {exc.offset}: {exc.msg}")
        self.lineno = exc.lineno
        self.offset = exc.offset


def _parse(source: str) -> ast.AST:
    try:
        return ast.parse(textwrap.dedent(source))
    except SyntaxError as exc:
        raise SourceParseError(exc) from exc


def cyclomatic_complexity(source: str) -> int:
    """1 plus the number of decision points in the source (see module docstring)."""
    tree = _parse(source)
    decisions = 0
    for node in ast.walk(tree):
        if isinstance(node, (ast.If, ast.For, ast.AsyncFor, ast.While, ast.IfExp, ast.ExceptHandler)):
            decisions += 1
        elif isinstance(node, ast.BoolOp):
            decisions += len(node.values) - 1
        elif isinstance(node, (ast.ListComp, ast.SetComp, ast.DictComp, ast.GeneratorExp)):
            decisions += sum(len(generator.ifs) for generator in node.generators)
    return 1 + decisions


class Halstead(NamedTuple):
    volume: float
    difficulty: float
    effort: float


def _classify_tokens(source: str) -> tuple[list[str], list[str]]:
    """Return (operator token strings, operand token strings), totals not uniques."""
    operators: list[str] = []
    operands: list[str] = []
    reader = io.StringIO(textwrap.dedent(source)).readline
    for token in tokenize.generate_tokens(reader):
        if token.type == tokenize.NAME:
            if keyword.iskeyword(token.string):
                operators.append(token.string)
            else:
                operands.append(token.string)
        elif token.type in (tokenize.NUMBER, tokenize.STRING):
            operands.append(token.string)
        elif token.type == tokenize.OP:
            if token.string == "...":
                operands.append(token.string)
            elif token.string not in _PUNCTUATION:
                operators.append(token.string)
    return operators, operands


def halstead(source: str) -> Halstead:
    """Halstead volume, difficulty, and effort from operator/operand counts.

    volume = (N1+N2) * log2(eta1+eta2); difficulty = (eta1/2) * (N2/eta2);
    effort = difficulty * volume. Sources with no operators or no operands
    yield (0, 0, 0).
    """
    _parse(source)
    operators, operands = _classify_tokens(source)
    eta1, eta2 = len(set(operators)), len(set(operands))
    big_n1, big_n2 = len(operators), len(operands)
    if eta1 == 0 or eta2 == 0:
        return Halstead(0.0, 0.0, 0.0)
    volume = (big_n1 + big_n2) * math.log2(eta1 + eta2)
    difficulty = (eta1 / 2.0) * (big_n2 / eta2)
    return Halstead(volume, difficulty, difficulty * volume)


def count_sloc(source: str) -> int:
    """Non-blank, non-comment source lines."""
    count = 0
    for line in source.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            count += 1
    return count


def maintainability_index(volume: float, cyclomatic: int, sloc: int) -> float:
    """Classic composite maintainability score rescaled and clamped to [0, 100]."""
    if volume < 0:
        raise ValueError("volume must be non-negative")
    if cyclomatic < 1:
        raise ValueError("cyclomatic complexity is at least 1 for any function")
    if sloc < 1:
        raise ValueError("sloc is at least 1 for any function")
    raw = 171.0 - 5.2 * math.log(max(volume, 1.0)) - 0.23 * cyclomatic - 16.2 * math.log(sloc)
    return min(100.0, max(0.0, 100.0 * raw / 171.0))


@dataclass(frozen=True)
class ComplexityProfile:
    cyclomatic: int
    sloc: int
    halstead_volume: float
    halstead_difficulty: float
    halstead_effort: float
    maintainability_index: float


def profile_function(source: str) -> ComplexityProfile:
    """All metrics for one function source."""
    cyclomatic = cyclomatic_complexity(source)
    volume, difficulty, effort = halstead(source)
    sloc = max(1, count_sloc(source))
    return ComplexityProfile(
        cyclomatic=cyclomatic,
        sloc=sloc,
        halstead_volume=volume,
        halstead_difficulty=difficulty,
        halstead_effort=effort,
        maintainability_index=maintainability_index(volume, cyclomatic, sloc),
    )


METRIC_NAMES = (
    "cyclomatic",
    "sloc",
    "halstead_volume",
    "halstead_difficulty",
    "halstead_effort",
    "maintainability_index",
)


@dataclass(frozen=True)
class MetricComparison:
    """One comparison row: group means, Cohen's d (fixed - unresolved), MW p-value."""

    metric: str
    fixed_mean: float
    unresolved_mean: float
    cohens_d: float
    p_value: float


def compare_groups(
    fixed: Sequence[ComplexityProfile], unresolved: Sequence[ComplexityProfile]
) -> list[MetricComparison]:
    """Per-metric comparison of the fixed and unresolved groups.

    d < 0 means the unresolved group scores higher on the metric; the p-value
    is the two-tailed Mann-Whitney U test.
    """
    if not fixed or not unresolved:
        raise ValueError("both groups must be non-empty")
    if len(fixed) < 2 or len(unresolved) < 2:
        raise ValueError("Cohen's d needs at least 2 observations per group")
    rows = []
    for metric in METRIC_NAMES:
        a = [float(getattr(profile, metric)) for profile in fixed]
        b = [float(getattr(profile, metric)) for profile in unresolved]
        _, p = mann_whitney_u(a, b)
        rows.append(
            MetricComparison(
                metric=metric,
                fixed_mean=math.fsum(a) / len(a),
                unresolved_mean=math.fsum(b) / len(b),
                cohens_d=cohens_d(a, b),
                p_value=p,
            )
        )
    return rows


def render_comparison_text(rows: Sequence[MetricComparison]) -> str:
    lines = [f"{'Metric':<24}{'Fixed mean':<14}{'Unresolved mean':<18}{'Cohen d':<10}p-value"]
    for row in rows:
        lines.append(
            f"{row.metric:<24}{row.fixed_mean:<14.2f}{row.unresolved_mean:<18.2f}"
            f"{row.cohens_d:<10.2f}{row.p_value:.3f}"
        )
    return "\n".join(lines) + "\n"
