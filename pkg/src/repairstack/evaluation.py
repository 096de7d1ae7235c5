"""pass@k, #fixed, per-type breakdowns, and the significance tests behind them.

pass@k uses exact integer binomials, so results are exact (up to one float
division) for the benchmark's n <= 10. Normal-distribution tails come from
``math.erfc``, which is far inside the documented 1e-7 error budget.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import BugInstance, BugType, Layer, RepairOutcome

LAYER_ORDER = (Layer.L1, Layer.L2, Layer.L3)


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of k draws (without replacement) from n samples is plausible.

    Computed as 1 - C(n-c, k)/C(n, k) with exact integer binomials;
    C(a, b) = 0 whenever a < b.
    """
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    total = math.comb(n, k)
    misses = math.comb(n - c, k) if n - c >= k else 0
    return 1.0 - misses / total


def count_fixed(outcomes: Sequence[RepairOutcome]) -> int:
    """Number of distinct bugs with at least one plausible sample at any layer."""
    seen: set[tuple[str, Layer]] = set()
    fixed: set[str] = set()
    for outcome in outcomes:
        key = (outcome.bug_id, outcome.layer)
        if key in seen:
            raise ValueError(f"duplicate outcome for bug {outcome.bug_id!r} at {outcome.layer.value}")
        seen.add(key)
        if outcome.c > 0:
            fixed.add(outcome.bug_id)
    return len(fixed)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _normal_two_tailed(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def _chi2_sf_1df(statistic: float) -> float:
    # P(X > s) for chi-square with 1 dof equals the two-tailed normal tail at sqrt(s)
    return math.erfc(math.sqrt(statistic / 2.0))


def _check_proportions(x1: int, n1: int, x2: int, n2: int) -> None:
    for x, n, label in ((x1, n1, "first"), (x2, n2, "second")):
        if n <= 0:
            raise ValueError(f"{label} sample size must be positive")
        if not 0 <= x <= n:
            raise ValueError(f"{label} success count must satisfy 0 <= x <= n")


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion z statistic and two-tailed normal p-value."""
    _check_proportions(x1, n1, x2, n2)
    p1, p2 = x1 / n1, x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        # all failures or all successes in both groups: proportions are equal
        return 0.0, 1.0
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = (p1 - p2) / se
    return z, _normal_two_tailed(z)


def chi_square_2x2(x1: int, n1: int, x2: int, n2: int, *, correction: bool = True) -> tuple[float, float]:
    """Chi-square test on the 2x2 fixed/unfixed table, 1 degree of freedom.

    The continuity correction moves each observed cell toward its expectation
    by min(0.5, |O-E|), so identical proportions still yield statistic 0 and
    p = 1.0.
    """
    _check_proportions(x1, n1, x2, n2)
    observed = [[float(x1), float(n1 - x1)], [float(x2), float(n2 - x2)]]
    row = [sum(r) for r in observed]
    col = [observed[0][j] + observed[1][j] for j in range(2)]
    total = row[0] + row[1]
    if 0.0 in row or 0.0 in col:
        raise ValueError("chi-square is undefined for tables with a zero marginal")
    statistic = 0.0
    for i in range(2):
        for j in range(2):
            expected = row[i] * col[j] / total
            diff = observed[i][j] - expected
            if correction:
                shrunk = max(abs(diff) - 0.5, 0.0)
                diff = math.copysign(shrunk, diff)
            statistic += diff * diff / expected
    return statistic, _chi2_sf_1df(statistic)


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and values[order[j]] == values[order[i]]:
            j += 1
        midrank = (i + 1 + j) / 2.0
        for t in range(i, j):
            ranks[order[t]] = midrank
        i = j
    return ranks


EXACT_MANN_WHITNEY_LIMIT = 12


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Mann-Whitney U for group ``a`` with midrank ties; two-tailed p.

    Exact p by full enumeration of rank splits when n1+n2 <= 12, otherwise a
    normal approximation with tie correction and 0.5 continuity correction.
    """
    if not a or not b:
        raise ValueError("both groups must be non-empty")
    n1, n2 = len(a), len(b)
    combined = list(a) + list(b)
    ranks = _midranks(combined)
    rank_sum_a = math.fsum(ranks[:n1])
    u = rank_sum_a - n1 * (n1 + 1) / 2.0
    mean_u = n1 * n2 / 2.0
    observed = abs(u - mean_u)

    if n1 + n2 <= EXACT_MANN_WHITNEY_LIMIT:
        # enumerate every split of the (tied) rank multiset into groups of size n1/n2;
        # the permutation null of U is symmetric about n1*n2/2 even with ties
        base = n1 * (n1 + 1) / 2.0
        extreme = 0
        total = 0
        for subset in itertools.combinations(range(n1 + n2), n1):
            u_subset = math.fsum(ranks[i] for i in subset) - base
            total += 1
            if abs(u_subset - mean_u) >= observed - 1e-9:
                extreme += 1
        return u, extreme / total

    n = n1 + n2
    tie_term = sum(t**3 - t for t in Counter(combined).values())
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0.0:
        return u, 1.0
    z = max(observed - 0.5, 0.0) / math.sqrt(variance)
    return u, _normal_two_tailed(z)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Effect size (mean(a) - mean(b)) / pooled sample standard deviation.

    With ``a`` the fixed group and ``b`` the unresolved group, negative values
    mean the unresolved group scores higher. Zero pooled variance yields 0.0
    for equal means and signed infinity otherwise.
    """
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least 2 observations")
    n1, n2 = len(a), len(b)
    mean_a = math.fsum(a) / n1
    mean_b = math.fsum(b) / n2
    var_a = math.fsum((x - mean_a) ** 2 for x in a) / (n1 - 1)
    var_b = math.fsum((x - mean_b) ** 2 for x in b) / (n2 - 1)
    pooled = math.sqrt(((n1 - 1) * var_a + (n2 - 1) * var_b) / (n1 + n2 - 2))
    if pooled == 0.0:
        if mean_a == mean_b:
            return 0.0
        return math.copysign(math.inf, mean_a - mean_b)
    return (mean_a - mean_b) / pooled


@dataclass(frozen=True)
class TypeBreakdown:
    """Per-bug-type row: average pass@1/pass@3 and fraction of bugs fixed."""

    bug_type: BugType
    bug_count: int
    avg_pass_at_1: float
    avg_pass_at_3: float
    fixed_count: int

    @property
    def fixed_fraction(self) -> float:
        return self.fixed_count / self.bug_count if self.bug_count else 0.0


@dataclass(frozen=True)
class QuarantineRecord:
    bug_id: str
    reason: str


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregate repair results: per-bug outcomes, pass@k, #fixed, per-type rows."""

    per_bug: tuple[RepairOutcome, ...]
    pass_at_k: dict[int, float]
    fixed_count: int
    total_bugs: int
    per_layer_fixed: dict[Layer, int]
    per_layer_pass_at_k: dict[Layer, dict[int, float]]
    per_type: dict[BugType, TypeBreakdown]
    quarantined: tuple[QuarantineRecord, ...] = ()

    @property
    def fixed_rate(self) -> float:
        return self.fixed_count / self.total_bugs if self.total_bugs else 0.0


def _final_outcomes_up_to(
    by_bug: Mapping[str, dict[Layer, RepairOutcome]], layer: Layer
) -> list[RepairOutcome]:
    """Best-known outcome per bug after ``layer``: the last layer attempted so far."""
    finals = []
    for layers in by_bug.values():
        eligible = [layers[l] for l in LAYER_ORDER if l.order <= layer.order and l in layers]
        if eligible:
            finals.append(eligible[-1])
    return finals


def build_report(
    outcomes: Sequence[RepairOutcome],
    *,
    bugs: Sequence[BugInstance] | None = None,
    k_values: Sequence[int] = (1, 3, 5),
    quarantined: Mapping[str, str] | None = None,
) -> EvaluationReport:
    """Aggregate per-(bug, layer) outcomes into the evaluation report.

    Bugs fixed at an earlier layer keep contributing that layer's score to later
    cumulative rows; escalated bugs contribute the outcome of the deepest layer
    attempted.
    """
    by_bug: dict[str, dict[Layer, RepairOutcome]] = {}
    seen: set[tuple[str, Layer]] = set()
    for outcome in outcomes:
        key = (outcome.bug_id, outcome.layer)
        if key in seen:
            raise ValueError(f"duplicate outcome for bug {outcome.bug_id!r} at {outcome.layer.value}")
        seen.add(key)
        by_bug.setdefault(outcome.bug_id, {})[outcome.layer] = outcome

    quarantine_records = tuple(
        QuarantineRecord(bug_id=b, reason=r) for b, r in sorted((quarantined or {}).items())
    )
    total = len(bugs) if bugs is not None else len(by_bug) + sum(
        1 for q in quarantine_records if q.bug_id not in by_bug
    )

    per_layer_fixed: dict[Layer, int] = {}
    per_layer_pass: dict[Layer, dict[int, float]] = {}
    for layer in LAYER_ORDER:
        finals = _final_outcomes_up_to(by_bug, layer)
        per_layer_fixed[layer] = sum(1 for o in finals if o.c > 0)
        per_layer_pass[layer] = {
            k: (math.fsum(pass_at_k(o.n, o.c, k) for o in finals) / len(finals)) if finals else 0.0
            for k in k_values
        }

    finals = _final_outcomes_up_to(by_bug, Layer.L3)
    overall_pass = {
        k: (math.fsum(pass_at_k(o.n, o.c, k) for o in finals) / len(finals)) if finals else 0.0
        for k in k_values
    }
    fixed_total = sum(1 for o in finals if o.c > 0)

    per_type: dict[BugType, TypeBreakdown] = {}
    if bugs is not None:
        type_of = {bug.bug_id: bug.bug_type for bug in bugs}
        grouped: dict[BugType, list[RepairOutcome]] = {}
        for outcome in finals:
            bug_type = type_of.get(outcome.bug_id)
            if bug_type is None:
                raise ValueError(f"outcome for unknown bug {outcome.bug_id!r}")
            grouped.setdefault(bug_type, []).append(outcome)
        for bug_type, group in grouped.items():
            per_type[bug_type] = TypeBreakdown(
                bug_type=bug_type,
                bug_count=len(group),
                avg_pass_at_1=math.fsum(pass_at_k(o.n, o.c, 1) for o in group) / len(group),
                avg_pass_at_3=math.fsum(pass_at_k(o.n, o.c, 3) for o in group) / len(group),
                fixed_count=sum(1 for o in group if o.c > 0),
            )

    ordered = tuple(sorted(outcomes, key=lambda o: (o.bug_id, o.layer.order)))
    return EvaluationReport(
        per_bug=ordered,
        pass_at_k=overall_pass,
        fixed_count=fixed_total,
        total_bugs=total,
        per_layer_fixed=per_layer_fixed,
        per_layer_pass_at_k=per_layer_pass,
        per_type=per_type,
        quarantined=quarantine_records,
    )


def render_report_text(report: EvaluationReport) -> str:
    """Human-readable report: per-layer cumulative table plus per-type rows."""
    lines: list[str] = []
    lines.append("Layer    " + "".join(f"Pass@{k:<6}" for k in sorted(report.pass_at_k)) + "Fixed")
    for layer in LAYER_ORDER:
        row = report.per_layer_pass_at_k[layer]
        fixed = report.per_layer_fixed[layer]
        pct = 100.0 * fixed / report.total_bugs if report.total_bugs else 0.0
        lines.append(
            f"{layer.value:<9}"
            + "".join(f"{row[k]:<11.2f}" for k in sorted(row))
            + f"{fixed}/{report.total_bugs} ({pct:.0f}%)"
        )
    if report.per_type:
        lines.append("")
        lines.append(f"{'Bug type':<24}{'AVG Pass@1':<12}{'AVG Pass@3':<12}%Fixed")
        for bug_type in BugType:
            row = report.per_type.get(bug_type)
            if row is None:
                continue
            lines.append(
                f"{bug_type.value:<24}{row.avg_pass_at_1:<12.2f}{row.avg_pass_at_3:<12.2f}"
                f"{100.0 * row.fixed_fraction:.0f}% ({row.fixed_count}/{row.bug_count})"
            )
    if report.quarantined:
        lines.append("")
        lines.append("Quarantined bugs:")
        for record in report.quarantined:
            lines.append(f"  {record.bug_id}: {record.reason}")
    return "\n".join(lines) + "\n"


def write_report_records(report: EvaluationReport, path: str | Path) -> None:
    """Machine-readable line-delimited report records."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        summary = {
            "type": "summary",
            "fixed_count": report.fixed_count,
            "total_bugs": report.total_bugs,
            "fixed_rate": report.fixed_rate,
            "pass_at_k": {str(k): v for k, v in report.pass_at_k.items()},
            "per_layer_fixed": {l.value: n for l, n in report.per_layer_fixed.items()},
        }
        handle.write(json.dumps(summary, sort_keys=True) + "\n")
        for outcome in report.per_bug:
            handle.write(
                json.dumps(
                    {
                        "type": "outcome",
                        "bug_id": outcome.bug_id,
                        "layer": outcome.layer.value,
                        "n": outcome.n,
                        "c": outcome.c,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
        for record in report.quarantined:
            handle.write(
                json.dumps(
                    {"type": "quarantine", "bug_id": record.bug_id, "reason": record.reason},
                    sort_keys=True,
                )
                + "\n"
            )
