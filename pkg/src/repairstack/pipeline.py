"""End-to-end layered escalation: extract, prompt, sample, validate, report.

Every bug is attempted at layer 1; bugs with zero plausible samples escalate
to layer 2 with augmented prompts, and the still-unresolved remainder to layer
3. Stage barriers sit between layers. Outcomes are persisted to a write-ahead
attempt log before the next stage begins, so interrupted runs resume without
re-querying completed (bug, layer) pairs.

Per-bug resources are resolved by convention under the repos root:

    <repos_root>/<bug_id>/                checkout at the buggy commit
    <repos_root>/<bug_id>.history.jsonl   commit log (else git history of the checkout)
    <repos_root>/<project>.docs/          documentation files
    <repos_root>/<project>.issues.jsonl   past-issue export
"""
from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Sequence

from .bug_knowledge import BugContext, assemble_bug_context
from .core import BugInstance, Layer, RepairOutcome, load_manifest
from .evaluation import EvaluationReport, build_report, render_report_text, write_report_records
from .llm import (
    CompletionRequest,
    HttpChatProvider,
    LlmClient,
    RunLog,
    ScriptedMockProvider,
    prompt_hash,
)
from .patching import PatchAttempt, Verdict, run_attempt
from .project_knowledge import (
    IssueIndex,
    ProjectContext,
    answer_doc_questions,
    answer_issue_questions,
    build_doc_index,
    load_documentation,
    load_issue_records,
    retrieve_doc_context,
    retrieve_similar_issues,
)
from .prompt import DEFAULT_TOKEN_BUDGET, Prompt, build_prompt, enforce_budget
from .repo_knowledge import (
    Commit,
    DependencySet,
    RepoContext,
    extract_called_definitions,
    find_callers,
    latest_change,
    load_commit_log,
    mine_co_occurring_files,
    read_git_log,
)
from .retrieval import LexicalEmbedder
from .sandbox import ProcessSandbox, Sandbox

LAYERS = (Layer.L1, Layer.L2, Layer.L3)


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run needs; flags and config files mirror these fields."""

    manifest: Path
    repos_root: Path
    output_dir: Path
    provider: str = "mock"
    model: str = "default"
    mock_script: Path | None = None
    endpoint_url: str = ""
    n: int = 10
    k_values: tuple[int, ...] = (1, 3, 5)
    temperature: float = 0.8
    top_n_co_occurring: int = 5
    chunk_size: int = 1000
    chunk_overlap: int = 200
    retrieval_k: int = 5
    embedding_dimension: int = 256
    token_budget: int = DEFAULT_TOKEN_BUDGET
    sandbox_command: tuple[str, ...] = ()
    parallelism: int = 1
    timeout_s: float = 300.0
    # regression selection: failing tests' containing files by default; the
    # full suite is opt-in (cost/safety trade-off)
    full_suite_regression: bool = False

    def validate(self) -> None:
        if not self.k_values or self.n < max(self.k_values):
            raise ConfigError(f"n ({self.n}) must be >= every k in {self.k_values}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        for label, path in (("manifest", self.manifest), ("repos_root", self.repos_root)):
            if not Path(path).exists():
                raise ConfigError(f"{label} path does not exist: {path}")


@dataclass(frozen=True)
class AvailabilityRecord:
    """Presence flags for the five layer-2/3 information kinds of one bug."""

    bug_id: str
    co_occurring_files: bool
    structural_dependencies: bool
    latest_change: bool
    documentation: bool
    issue_history: bool

    @property
    def flags(self) -> tuple[bool, bool, bool, bool, bool]:
        return (
            self.co_occurring_files,
            self.structural_dependencies,
            self.latest_change,
            self.documentation,
            self.issue_history,
        )

    @property
    def missing_count(self) -> int:
        return sum(1 for flag in self.flags if not flag)


@dataclass(frozen=True)
class AvailabilitySummary:
    total: int
    all_present: int
    missing_one: int
    missing_multiple: int


def availability_report(
    records: Sequence[AvailabilityRecord],
) -> tuple[list[AvailabilityRecord], AvailabilitySummary]:
    """Per-bug availability rows plus the three-bucket summary."""
    ordered = sorted(records, key=lambda record: record.bug_id)
    summary = AvailabilitySummary(
        total=len(ordered),
        all_present=sum(1 for r in ordered if r.missing_count == 0),
        missing_one=sum(1 for r in ordered if r.missing_count == 1),
        missing_multiple=sum(1 for r in ordered if r.missing_count > 1),
    )
    return ordered, summary


class AttemptLog:
    """Write-ahead JSONL log of outcomes and quarantines, the resume source."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append_outcome(
        self, outcome: RepairOutcome, prompt_digest: str, attempts: Sequence[PatchAttempt]
    ) -> None:
        record = {
            "type": "outcome",
            "bug_id": outcome.bug_id,
            "layer": outcome.layer.value,
            "n": outcome.n,
            "c": outcome.c,
            "prompt_hash": prompt_digest,
            "attempts": [
                {
                    "sample_index": attempt.sample_index,
                    "verdict": attempt.verdict.value,
                    "splice_ok": attempt.splice_ok,
                }
                for attempt in attempts
            ],
        }
        self._append(record)

    def append_quarantine(self, bug_id: str, reason: str) -> None:
        self._append({"type": "quarantine", "bug_id": bug_id, "reason": reason})

    def _append(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def load(self) -> tuple[dict[tuple[str, Layer], RepairOutcome], dict[str, str]]:
        outcomes: dict[tuple[str, Layer], RepairOutcome] = {}
        quarantines: dict[str, str] = {}
        if not self.path.exists():
            return outcomes, quarantines
        with self.path.open("r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                record = json.loads(line)
                if record.get("type") == "outcome":
                    layer = Layer(record["layer"])
                    outcome = RepairOutcome(
                        bug_id=record["bug_id"],
                        layer=layer,
                        n=record["n"],
                        c=record["c"],
                        attempts=tuple(
                            f"{record['bug_id']}:{layer.value}:{a['sample_index']}"
                            for a in record.get("attempts", ())
                        ),
                    )
                    outcomes[(outcome.bug_id, layer)] = outcome
                elif record.get("type") == "quarantine":
                    quarantines[record["bug_id"]] = record["reason"]
        return outcomes, quarantines


@dataclass
class _BugResources:
    checkout: Path
    history: list[Commit]
    bug_ctx: BugContext | None = None
    repo_ctx: RepoContext | None = None
    proj_ctx: ProjectContext | None = None
    availability: AvailabilityRecord | None = None


class ContextResolver:
    """Resolves and caches the three context bundles for each bug."""

    def __init__(self, config: RunConfig, *, qa_provider: Any = None):
        self.config = config
        self.qa_provider = qa_provider
        self.embedder = LexicalEmbedder(config.embedding_dimension)
        self._resources: dict[str, _BugResources] = {}

    def _resources_for(self, bug: BugInstance) -> _BugResources:
        if bug.bug_id not in self._resources:
            checkout = Path(self.config.repos_root) / bug.bug_id
            if not checkout.is_dir():
                raise FileNotFoundError(f"checkout not found: {checkout}")
            history_file = Path(self.config.repos_root) / f"{bug.bug_id}.history.jsonl"
            if history_file.is_file():
                history = load_commit_log(history_file)
            elif (checkout / ".git").exists():
                history = read_git_log(checkout)
            else:
                history = []
            self._resources[bug.bug_id] = _BugResources(checkout=checkout, history=history)
        return self._resources[bug.bug_id]

    def checkout_for(self, bug: BugInstance) -> Path:
        return self._resources_for(bug).checkout

    def bug_context(self, bug: BugInstance) -> BugContext:
        resources = self._resources_for(bug)
        if resources.bug_ctx is None:
            resources.bug_ctx = assemble_bug_context(bug, resources.checkout)
        return resources.bug_ctx

    def repo_context(self, bug: BugInstance) -> RepoContext:
        resources = self._resources_for(bug)
        if resources.repo_ctx is None:
            bug_ctx = self.bug_context(bug)
            co_occurring = mine_co_occurring_files(
                resources.history, bug.span.file_path, self.config.top_n_co_occurring
            )
            called = extract_called_definitions(
                bug_ctx.buggy_source,
                bug_ctx.imports,
                resources.checkout,
                source_file=bug.span.file_path,
            )
            callers = find_callers(bug.span.qualified_name, co_occurring, resources.checkout)
            change = latest_change(resources.history, bug.span, bug.fix_commit)
            resources.repo_ctx = RepoContext(
                co_occurring=tuple(co_occurring),
                dependencies=DependencySet(
                    called_definitions=called.entries,
                    caller_definitions=tuple(callers),
                ),
                latest_change=change,
                unresolved_names=called.unresolved,
            )
        return resources.repo_ctx

    def fix_date(self, bug: BugInstance) -> datetime | None:
        for commit in self._resources_for(bug).history:
            if commit.hash == bug.fix_commit:
                return commit.author_date
        return None

    def project_context(self, bug: BugInstance) -> ProjectContext:
        resources = self._resources_for(bug)
        if resources.proj_ctx is None:
            bug_ctx = self.bug_context(bug)
            repo_ctx = self.repo_context(bug)
            function_name = bug.span.qualified_name.rpartition(".")[2] or bug.span.qualified_name
            called_names = [d.qualified_name for d in repo_ctx.dependencies.called_definitions]

            docs = load_documentation(Path(self.config.repos_root) / f"{bug.project}.docs")
            doc_index = build_doc_index(
                docs,
                self.embedder,
                chunk_size=self.config.chunk_size,
                chunk_overlap=self.config.chunk_overlap,
            )
            doc_hits = retrieve_doc_context(
                doc_index,
                bug_ctx.buggy_source,
                called_names,
                self.embedder,
                k=self.config.retrieval_k,
            )
            doc_insights = (
                None
                if doc_hits.missing
                else answer_doc_questions(doc_hits.hits, self.qa_provider, function_name=function_name)
            )

            issues_path = Path(self.config.repos_root) / f"{bug.project}.issues.jsonl"
            records = load_issue_records(issues_path) if issues_path.is_file() else []
            fix_date = self.fix_date(bug)
            issue_index = IssueIndex(records, self.embedder, fix_date=fix_date)
            issue_hits = retrieve_similar_issues(
                issue_index, bug_ctx.buggy_source, fix_date, k=self.config.retrieval_k
            )
            issue_insights = (
                None
                if issue_hits.missing
                else answer_issue_questions(
                    list(issue_hits.hits), self.qa_provider, function_name=function_name
                )
            )

            resources.proj_ctx = ProjectContext(
                doc_insights=doc_insights,
                issue_insights=issue_insights,
                doc_missing=doc_hits.missing,
                issues_missing=issue_hits.missing,
            )
            resources.availability = AvailabilityRecord(
                bug_id=bug.bug_id,
                co_occurring_files=bool(repo_ctx.co_occurring),
                structural_dependencies=bool(
                    repo_ctx.dependencies.called_definitions
                    or repo_ctx.dependencies.caller_definitions
                ),
                latest_change=repo_ctx.latest_change is not None,
                documentation=not doc_hits.missing,
                issue_history=not issue_hits.missing,
            )
        return resources.proj_ctx

    def prompt_for(self, bug: BugInstance, layer: Layer) -> Prompt:
        bug_ctx = self.bug_context(bug)
        repo_ctx = self.repo_context(bug) if layer.order >= 2 else None
        proj_ctx = self.project_context(bug) if layer is Layer.L3 else None
        prompt = build_prompt(layer, bug_ctx, repo_ctx, proj_ctx)
        return enforce_budget(prompt, self.config.token_budget)

    def availability_records(self) -> list[AvailabilityRecord]:
        return [
            resources.availability
            for resources in self._resources.values()
            if resources.availability is not None
        ]


class PipelineRun:
    """One pipeline execution over a manifest; see :func:`run_pipeline`."""

    def __init__(
        self,
        config: RunConfig,
        *,
        provider: Any = None,
        sandbox_factory: Callable[[Path], Sandbox] | None = None,
        qa_provider: Any = None,
    ):
        config.validate()
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.attempt_log = AttemptLog(self.output_dir / "attempts.jsonl")
        self.provider = provider if provider is not None else self._build_provider()
        self.client = LlmClient(
            self.provider,
            run_log=RunLog(self.output_dir / "llm_calls.jsonl"),
            max_in_flight=max(1, config.parallelism),
        )
        self.sandbox_factory = sandbox_factory or self._build_sandbox_factory()
        self.resolver = ContextResolver(config, qa_provider=qa_provider)

    def _build_provider(self) -> Any:
        if self.config.provider == "mock":
            if self.config.mock_script is None:
                raise ConfigError("mock provider requires mock_script")
            return ScriptedMockProvider.from_script(self.config.mock_script)
        if self.config.provider == "http":
            if not self.config.endpoint_url:
                raise ConfigError("http provider requires endpoint_url")
            return HttpChatProvider(self.config.endpoint_url)
        raise ConfigError(f"unknown provider {self.config.provider!r}")

    def _build_sandbox_factory(self) -> Callable[[Path], Sandbox]:
        command = self.config.sandbox_command
        if not command:
            raise ConfigError("sandbox_command is required unless a sandbox factory is injected")

        def factory(checkout: Path) -> Sandbox:
            return ProcessSandbox(command, checkout)

        return factory

    def _attempt_bug(self, bug: BugInstance, layer: Layer) -> tuple[RepairOutcome | None, str | None]:
        """One (bug, layer) attempt; returns (outcome, quarantine reason)."""
        try:
            prompt = self.resolver.prompt_for(bug, layer)
        except Exception as exc:
            return None, f"{type(exc).__name__}: {exc}"
        rendered = prompt.render()
        request = CompletionRequest(
            prompt=rendered,
            n=self.config.n,
            temperature=self.config.temperature,
            model=self.config.model,
        )
        batch = self.client.complete(request, bug_id=bug.bug_id, layer=layer)
        checkout = self.resolver.checkout_for(bug)
        sandbox = self.sandbox_factory(checkout)
        regression = (".",) if self.config.full_suite_regression else None
        try:
            attempts = [
                run_attempt(
                    bug,
                    layer,
                    index,
                    response,
                    checkout,
                    sandbox,
                    regression_tests=regression,
                    timeout_s=self.config.timeout_s,
                )
                for index, response in enumerate(batch.responses)
            ]
        finally:
            close = getattr(sandbox, "close", None)
            if callable(close):
                close()
        plausible = sum(1 for attempt in attempts if attempt.verdict is Verdict.PLAUSIBLE)
        outcome = RepairOutcome(
            bug_id=bug.bug_id,
            layer=layer,
            n=self.config.n,
            c=plausible,
            attempts=tuple(attempt.attempt_id for attempt in attempts),
        )
        self.attempt_log.append_outcome(outcome, prompt_hash(rendered), attempts)
        return outcome, None

    def run(self) -> EvaluationReport:
        bugs = load_manifest(self.config.manifest)
        outcomes, quarantines = self.attempt_log.load()

        for layer in LAYERS:
            targets = []
            for bug in bugs:
                if bug.bug_id in quarantines:
                    continue
                if (bug.bug_id, layer) in outcomes:
                    continue  # resumed run: already persisted
                if layer is Layer.L1:
                    targets.append(bug)
                else:
                    previous = outcomes.get((bug.bug_id, Layer(f"L{layer.order - 1}")))
                    if previous is not None and previous.c == 0:
                        targets.append(bug)

            def work(bug: BugInstance) -> tuple[BugInstance, RepairOutcome | None, str | None]:
                outcome, reason = self._attempt_bug(bug, layer)
                return bug, outcome, reason

            if self.config.parallelism > 1 and len(targets) > 1:
                with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
                    results = list(pool.map(work, targets))
            else:
                results = [work(bug) for bug in targets]

            for bug, outcome, reason in results:
                if outcome is not None:
                    outcomes[(bug.bug_id, layer)] = outcome
                elif reason is not None:
                    quarantines[bug.bug_id] = reason
                    self.attempt_log.append_quarantine(bug.bug_id, reason)
            # stage barrier: every persisted outcome lands before the next layer starts

        report = build_report(
            list(outcomes.values()),
            bugs=bugs,
            k_values=self.config.k_values,
            quarantined=quarantines,
        )
        self._write_artifacts(report)
        return report

    def _write_artifacts(self, report: EvaluationReport) -> None:
        (self.output_dir / "report.txt").write_text(render_report_text(report), encoding="utf-8")
        write_report_records(report, self.output_dir / "report.jsonl")
        records = self.resolver.availability_records()
        if records:
            write_availability(records, self.output_dir / "availability.jsonl")


def write_availability(records: Sequence[AvailabilityRecord], path: str | Path) -> None:
    ordered, summary = availability_report(records)
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(
            json.dumps(
                {
                    "type": "summary",
                    "total": summary.total,
                    "all_present": summary.all_present,
                    "missing_one": summary.missing_one,
                    "missing_multiple": summary.missing_multiple,
                },
                sort_keys=True,
            )
            + "\n"
        )
        for record in ordered:
            handle.write(
                json.dumps(
                    {
                        "type": "bug",
                        "bug_id": record.bug_id,
                        "co_occurring_files": record.co_occurring_files,
                        "structural_dependencies": record.structural_dependencies,
                        "latest_change": record.latest_change,
                        "documentation": record.documentation,
                        "issue_history": record.issue_history,
                        "missing_count": record.missing_count,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def run_pipeline(
    config: RunConfig,
    *,
    provider: Any = None,
    sandbox_factory: Callable[[Path], Sandbox] | None = None,
    qa_provider: Any = None,
) -> EvaluationReport:
    """Run the full layered escalation and return the aggregated report.

    ``provider``, ``sandbox_factory``, and ``qa_provider`` override the
    config-derived defaults; tests inject scripted doubles through them.
    """
    return PipelineRun(
        config,
        provider=provider,
        sandbox_factory=sandbox_factory,
        qa_provider=qa_provider,
    ).run()


def extract_contexts(config: RunConfig, *, qa_provider: Any = None) -> dict[str, dict[str, Any]]:
    """Context bundles only (no sampling): per bug, the three layers' extractions.

    Extraction failures turn into an ``error`` entry for the bug instead of
    aborting the sweep.
    """
    config.validate()
    resolver = ContextResolver(config, qa_provider=qa_provider)
    bundles: dict[str, dict[str, Any]] = {}
    for bug in load_manifest(config.manifest):
        try:
            bug_ctx = resolver.bug_context(bug)
            repo_ctx = resolver.repo_context(bug)
            proj_ctx = resolver.project_context(bug)
        except Exception as exc:
            bundles[bug.bug_id] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        bundles[bug.bug_id] = {
            "bug": {
                "buggy_source": bug_ctx.buggy_source,
                "imports": list(bug_ctx.imports),
                "error_info": bug_ctx.error_info,
                "failing_tests": [test_id for test_id, _ in bug_ctx.failing_test_sources],
            },
            "repository": {
                "co_occurring": [
                    {"file_path": c.file_path, "co_commit_count": c.co_commit_count}
                    for c in repo_ctx.co_occurring
                ],
                "called_definitions": [d.qualified_name for d in repo_ctx.dependencies.called_definitions],
                "caller_definitions": [d.qualified_name for d in repo_ctx.dependencies.caller_definitions],
                "latest_change": repo_ctx.latest_change.commit_hash if repo_ctx.latest_change else None,
                "unresolved_names": list(repo_ctx.unresolved_names),
            },
            "project": {
                "doc_missing": proj_ctx.doc_missing,
                "issues_missing": proj_ctx.issues_missing,
                "doc_answers": [a.answer for a in proj_ctx.doc_insights.answers]
                if proj_ctx.doc_insights
                else [],
                "issue_answers": [a.answer for a in proj_ctx.issue_insights.answers]
                if proj_ctx.issue_insights
                else [],
            },
        }
    return bundles
