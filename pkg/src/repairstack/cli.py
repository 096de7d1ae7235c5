"""Command-line entry point: run / extract / evaluate / complexity.

Option precedence is built-in defaults, then the --config JSON file, then
explicit flags. Credentials are environment-only and never appear in config
files or flags.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .bug_knowledge import extract_buggy_function
from .complexity import compare_groups, profile_function, render_comparison_text
from .core import load_manifest
from .evaluation import build_report, chi_square_2x2, render_report_text, two_proportion_z
from .pipeline import AttemptLog, ConfigError, RunConfig, extract_contexts, run_pipeline

_CONFIG_FIELDS = {
    "manifest": Path,
    "repos_root": Path,
    "output_dir": Path,
    "provider": str,
    "model": str,
    "mock_script": Path,
    "endpoint_url": str,
    "n": int,
    "temperature": float,
    "top_n_co_occurring": int,
    "chunk_size": int,
    "chunk_overlap": int,
    "retrieval_k": int,
    "embedding_dimension": int,
    "token_budget": int,
    "parallelism": int,
    "timeout_s": float,
    "full_suite_regression": bool,
}


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    parser.add_argument("--manifest", type=Path)
    parser.add_argument("--repos-root", dest="repos_root", type=Path)
    parser.add_argument("--output-dir", dest="output_dir", type=Path)
    parser.add_argument("--provider", choices=["mock", "http"])
    parser.add_argument("--model")
    parser.add_argument("--mock-script", dest="mock_script", type=Path)
    parser.add_argument("--endpoint-url", dest="endpoint_url")
    parser.add_argument("--n", type=int)
    parser.add_argument("--k", dest="k_values", help="comma-separated k list, e.g. 1,3,5")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--top-n-co-occurring", dest="top_n_co_occurring", type=int)
    parser.add_argument("--chunk-size", dest="chunk_size", type=int)
    parser.add_argument("--chunk-overlap", dest="chunk_overlap", type=int)
    parser.add_argument("--retrieval-k", dest="retrieval_k", type=int)
    parser.add_argument("--embedding-dimension", dest="embedding_dimension", type=int)
    parser.add_argument("--token-budget", dest="token_budget", type=int)
    parser.add_argument("--sandbox-command", dest="sandbox_command", help="shell-split agent command")
    parser.add_argument("--parallelism", type=int)
    parser.add_argument("--timeout-s", dest="timeout_s", type=float)
    parser.add_argument(
        "--full-suite-regression",
        dest="full_suite_regression",
        action="store_const",
        const=True,
        default=None,
    )


def _build_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, Any] = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key, value in raw.items():
            if key == "k_values":
                values[key] = tuple(int(k) for k in value)
            elif key == "sandbox_command":
                values[key] = tuple(value)
            elif key in _CONFIG_FIELDS:
                values[key] = _CONFIG_FIELDS[key](value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key in _CONFIG_FIELDS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    if getattr(args, "k_values", None):
        values["k_values"] = tuple(int(k) for k in str(args.k_values).split(","))
    if getattr(args, "sandbox_command", None):
        import shlex

        values["sandbox_command"] = tuple(shlex.split(args.sandbox_command))
    missing = [key for key in ("manifest", "repos_root", "output_dir") if key not in values]
    if missing:
        raise ConfigError(f"missing required configuration: {', '.join(missing)}")
    return RunConfig(**values)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    report = run_pipeline(config)
    sys.stdout.write(render_report_text(report))
    return 0


def _cmd_extract(args: argparse.Namespace) -> int:
    config = _build_config(args)
    bundles = extract_contexts(config)
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    out_path = Path(config.output_dir) / "context_bundles.json"
    out_path.write_text(json.dumps(bundles, indent=2, sort_keys=True), encoding="utf-8")
    sys.stdout.write(f"wrote {len(bundles)} context bundles to {out_path}\n")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    bugs = load_manifest(args.manifest)
    outcomes, quarantines = AttemptLog(Path(args.output_dir) / "attempts.jsonl").load()
    report = build_report(
        list(outcomes.values()),
        bugs=bugs,
        k_values=tuple(int(k) for k in str(args.k_values or "1,3,5").split(",")),
        quarantined=quarantines,
    )
    sys.stdout.write(render_report_text(report))
    if args.baseline_fixed is not None and args.baseline_total is not None:
        z, p_z = two_proportion_z(
            report.fixed_count, report.total_bugs, args.baseline_fixed, args.baseline_total
        )
        stat, p_chi = chi_square_2x2(
            report.fixed_count, report.total_bugs, args.baseline_fixed, args.baseline_total
        )
        sys.stdout.write(
            f"\nagainst baseline {args.baseline_fixed}/{args.baseline_total}: "
            f"z={z:.3f} (p={p_z:.3f}), chi-square={stat:.3f} (p={p_chi:.3f})\n"
        )
    return 0


def _cmd_complexity(args: argparse.Namespace) -> int:
    bugs = load_manifest(args.manifest)
    outcomes, _ = AttemptLog(Path(args.output_dir) / "attempts.jsonl").load()
    fixed_ids = {bug_id for (bug_id, _), outcome in outcomes.items() if outcome.c > 0}
    attempted = {bug_id for (bug_id, _) in outcomes}
    fixed_profiles = []
    unresolved_profiles = []
    for bug in bugs:
        if bug.bug_id not in attempted:
            continue
        source = extract_buggy_function(Path(args.repos_root) / bug.bug_id, bug.span)
        profile = profile_function(source)
        if bug.bug_id in fixed_ids:
            fixed_profiles.append(profile)
        else:
            unresolved_profiles.append(profile)
    rows = compare_groups(fixed_profiles, unresolved_profiles)
    sys.stdout.write(
        f"fixed bugs: {len(fixed_profiles)}, unresolved bugs: {len(unresolved_profiles)}\n"
    )
    sys.stdout.write(render_comparison_text(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repairstack", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="full layered escalation pipeline")
    _add_config_arguments(run_parser)
    run_parser.set_defaults(func=_cmd_run)

    extract_parser = subparsers.add_parser("extract", help="context bundles only, no sampling")
    _add_config_arguments(extract_parser)
    extract_parser.set_defaults(func=_cmd_extract)

    evaluate_parser = subparsers.add_parser("evaluate", help="recompute the report from logs")
    evaluate_parser.add_argument("--manifest", type=Path, required=True)
    evaluate_parser.add_argument("--output-dir", dest="output_dir", type=Path, required=True)
    evaluate_parser.add_argument("--k", dest="k_values")
    evaluate_parser.add_argument("--baseline-fixed", dest="baseline_fixed", type=int)
    evaluate_parser.add_argument("--baseline-total", dest="baseline_total", type=int)
    evaluate_parser.set_defaults(func=_cmd_evaluate)

    complexity_parser = subparsers.add_parser(
        "complexity", help="fixed-vs-unresolved complexity comparison"
    )
    complexity_parser.add_argument("--manifest", type=Path, required=True)
    complexity_parser.add_argument("--repos-root", dest="repos_root", type=Path, required=True)
    complexity_parser.add_argument("--output-dir", dest="output_dir", type=Path, required=True)
    complexity_parser.set_defaults(func=_cmd_complexity)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
