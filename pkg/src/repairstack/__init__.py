"""Layered knowledge extraction, prompting, and evaluation for LLM-based program repair."""

from .core import (
    BugInstance,
    BugType,
    CaseKind,
    FunctionSpan,
    Layer,
    ManifestError,
    RepairOutcome,
    ValueCase,
    Variable,
    load_manifest,
    save_manifest,
    taxonomy_counts,
)
from .evaluation import (
    EvaluationReport,
    build_report,
    chi_square_2x2,
    cohens_d,
    count_fixed,
    mann_whitney_u,
    pass_at_k,
    two_proportion_z,
)
from .pipeline import (
    AvailabilityRecord,
    AvailabilitySummary,
    RunConfig,
    availability_report,
    extract_contexts,
    run_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "BugInstance",
    "BugType",
    "CaseKind",
    "FunctionSpan",
    "Layer",
    "ManifestError",
    "RepairOutcome",
    "ValueCase",
    "Variable",
    "load_manifest",
    "save_manifest",
    "taxonomy_counts",
    "EvaluationReport",
    "build_report",
    "chi_square_2x2",
    "cohens_d",
    "count_fixed",
    "mann_whitney_u",
    "pass_at_k",
    "two_proportion_z",
    "AvailabilityRecord",
    "AvailabilitySummary",
    "RunConfig",
    "availability_report",
    "extract_contexts",
    "run_pipeline",
    "__version__",
]
