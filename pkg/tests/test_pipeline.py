from __future__ import annotations

import json
from pathlib import Path

import pytest

from escalation_fixture import build_workspace, sandbox_factory
from repairstack.core import Layer
from repairstack.evaluation import render_report_text
from repairstack.pipeline import (
    AvailabilityRecord,
    ConfigError,
    RunConfig,
    availability_report,
    extract_contexts,
    run_pipeline,
)


class CountingProvider:
    """Wraps a provider and records every (bug-discriminating) prompt it served."""

    def __init__(self, inner):
        self.inner = inner
        self.prompts: list[str] = []

    def complete(self, request):
        self.prompts.append(request.prompt)
        return self.inner.complete(request)


class PoisonProvider:
    def complete(self, request):
        raise AssertionError("provider must not be queried on a completed run")


def outcomes_by_pair(report):
    return {(o.bug_id, o.layer): o for o in report.per_bug}


def test_escalation_fixes_a_at_l1_b_at_l2_c_never(tmp_path):
    config, provider = build_workspace(tmp_path)
    report = run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)
    outcomes = outcomes_by_pair(report)

    assert outcomes[("bug-a", Layer.L1)].c == config.n  # fixed at L1
    assert ("bug-a", Layer.L2) not in outcomes
    assert outcomes[("bug-b", Layer.L1)].c == 0
    assert outcomes[("bug-b", Layer.L2)].c == config.n  # fixed at L2, not L1
    assert ("bug-b", Layer.L3) not in outcomes
    assert outcomes[("bug-c", Layer.L3)].c == 0  # unresolved after L3
    assert report.fixed_count == 2
    assert report.per_layer_fixed == {Layer.L1: 1, Layer.L2: 2, Layer.L3: 2}


def test_l3_attempts_exactly_the_bugs_unresolved_after_l2(tmp_path):
    config, provider = build_workspace(tmp_path)
    counting = CountingProvider(provider)
    run_pipeline(config, provider=counting, sandbox_factory=sandbox_factory)
    # prompts arrive in stage order: L1 for a, b, c; L2 for b, c; L3 for c only
    assert len(counting.prompts) == 6
    l3_prompts = counting.prompts[5:]
    assert len(l3_prompts) == 1
    assert "def narrow(value):" in l3_prompts[0]


def test_escalation_attempt_sets_shrink_monotonically(tmp_path):
    config, provider = build_workspace(tmp_path)
    report = run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)
    attempted = {layer: set() for layer in (Layer.L1, Layer.L2, Layer.L3)}
    for outcome in report.per_bug:
        attempted[outcome.layer].add(outcome.bug_id)
    assert attempted[Layer.L3] <= attempted[Layer.L2] <= attempted[Layer.L1]


def test_pipeline_deterministic_across_five_runs(tmp_path):
    reports = []
    texts = []
    for index in range(5):
        config, provider = build_workspace(tmp_path / f"run{index}")
        report = run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)
        reports.append(report)
        texts.append(render_report_text(report))
    assert all(report == reports[0] for report in reports[1:])
    assert all(text == texts[0] for text in texts[1:])


def test_parallel_run_matches_sequential_report(tmp_path):
    from dataclasses import replace

    config_seq, provider_seq = build_workspace(tmp_path / "seq")
    sequential = run_pipeline(config_seq, provider=provider_seq, sandbox_factory=sandbox_factory)
    config_par, provider_par = build_workspace(tmp_path / "par")
    parallel = run_pipeline(
        replace(config_par, parallelism=3), provider=provider_par, sandbox_factory=sandbox_factory
    )
    assert parallel == sequential


def test_resume_skips_completed_pairs_entirely(tmp_path):
    config, provider = build_workspace(tmp_path)
    first = run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)
    # a finished run must never re-query the provider
    second = run_pipeline(config, provider=PoisonProvider(), sandbox_factory=sandbox_factory)
    assert second == first


def test_resume_after_interrupted_l1_matches_uninterrupted_run(tmp_path):
    config, provider = build_workspace(tmp_path)
    uninterrupted = run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)

    # simulate an interrupt after L1: keep only L1 outcome lines in the log
    log_path = Path(config.output_dir) / "attempts.jsonl"
    lines = [
        line
        for line in log_path.read_text(encoding="utf-8").splitlines()
        if json.loads(line).get("layer") == "L1"
    ]
    log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    counting = CountingProvider(provider)
    resumed = run_pipeline(config, provider=counting, sandbox_factory=sandbox_factory)
    assert resumed == uninterrupted
    assert len(counting.prompts) == 3  # L2 for b and c, L3 for c


def test_quarantined_bug_flagged_once_and_never_fixed(tmp_path):
    config, provider = build_workspace(tmp_path)
    # break bug-c's checkout so layer-1 extraction fails
    (Path(config.repos_root) / "bug-c" / "app.py").unlink()
    report = run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)
    assert [q.bug_id for q in report.quarantined] == ["bug-c"]
    assert "FileNotFoundError" in report.quarantined[0].reason
    assert all(outcome.bug_id != "bug-c" for outcome in report.per_bug)
    assert report.fixed_count == 2
    assert report.total_bugs == 3


def test_plausible_count_recomputable_from_attempt_log(tmp_path):
    config, provider = build_workspace(tmp_path)
    run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)
    for line in (Path(config.output_dir) / "attempts.jsonl").read_text().splitlines():
        record = json.loads(line)
        if record.get("type") != "outcome":
            continue
        recounted = sum(1 for a in record["attempts"] if a["verdict"] == "plausible")
        assert recounted == record["c"], (record["bug_id"], record["layer"])


def test_full_suite_regression_flag_widens_test_selection(tmp_path):
    from dataclasses import replace

    config, provider = build_workspace(tmp_path)
    seen_tests = []

    def recording_factory(checkout):
        inner = sandbox_factory(checkout)

        class Recorder:
            def run(self, request):
                seen_tests.append(tuple(request["tests"]))
                return inner.run(request)

        return Recorder()

    run_pipeline(
        replace(config, full_suite_regression=True),
        provider=provider,
        sandbox_factory=recording_factory,
    )
    assert all(tests[-1] == "." for tests in seen_tests)


def test_pipeline_writes_artifacts_and_availability(tmp_path):
    config, provider = build_workspace(tmp_path)
    run_pipeline(config, provider=provider, sandbox_factory=sandbox_factory)
    out = Path(config.output_dir)
    assert (out / "report.txt").exists()
    assert (out / "report.jsonl").exists()
    assert (out / "llm_calls.jsonl").exists()
    lines = [json.loads(l) for l in (out / "availability.jsonl").read_text().splitlines()]
    summary = lines[0]
    # only bug-c reaches layer 3; it has no history, docs, or issues
    assert summary["total"] == 1
    records = {record["bug_id"]: record for record in lines[1:]}
    assert records["bug-c"]["missing_count"] == 5


def test_run_config_validation(tmp_path):
    config, _ = build_workspace(tmp_path)
    with pytest.raises(ConfigError):
        RunConfig(
            manifest=config.manifest,
            repos_root=config.repos_root,
            output_dir=config.output_dir,
            n=2,
            k_values=(1, 3, 5),
        ).validate()
    with pytest.raises(ConfigError):
        RunConfig(
            manifest=config.manifest / "missing",
            repos_root=config.repos_root,
            output_dir=config.output_dir,
        ).validate()


def test_extract_contexts_builds_bundles(tmp_path):
    config, _ = build_workspace(tmp_path)
    bundles = extract_contexts(config)
    assert set(bundles) == {"bug-a", "bug-b", "bug-c"}
    bundle_b = bundles["bug-b"]
    assert bundle_b["bug"]["buggy_source"].startswith("def scale")
    assert bundle_b["repository"]["co_occurring"] == [
        {"file_path": "tests/test_app.py", "co_commit_count": 1}
    ]
    assert bundle_b["repository"]["latest_change"] is not None
    assert bundle_b["project"]["doc_missing"] is True
    assert bundles["bug-a"]["repository"]["co_occurring"] == []


def test_extract_contexts_records_errors_per_bug(tmp_path):
    config, _ = build_workspace(tmp_path)
    (Path(config.repos_root) / "bug-a" / "app.py").unlink()
    bundles = extract_contexts(config)
    assert "error" in bundles["bug-a"]
    assert "bug" in bundles["bug-b"]


def record(bug_id: str, missing: int) -> AvailabilityRecord:
    flags = [True] * 5
    for index in range(missing):
        flags[index] = False
    return AvailabilityRecord(
        bug_id=bug_id,
        co_occurring_files=flags[0],
        structural_dependencies=flags[1],
        latest_change=flags[2],
        documentation=flags[3],
        issue_history=flags[4],
    )


def test_availability_report_three_bucket_summary():
    records = (
        [record(f"all-{i}", 0) for i in range(4)]
        + [record(f"one-{i}", 1) for i in range(3)]
        + [record(f"many-{i}", missing) for i, missing in enumerate((2, 3, 5))]
    )
    ordered, summary = availability_report(records)
    assert summary.total == 10
    assert summary.all_present == 4
    assert summary.missing_one == 3
    assert summary.missing_multiple == 3
    assert [r.bug_id for r in ordered] == sorted(r.bug_id for r in records)


def test_availability_missing_count_matches_flags():
    rec = record("x", 2)
    assert rec.missing_count == 2
    assert rec.flags.count(False) == 2
