"""Theory-guided moral judgment evaluation harness."""

from .datasets import DatasetSpec, GoldLabel, TestCase, load, preprocess_social_chem, sample
from .engine import RunSpec, RunSummary, cross_matrix, run
from .gateway import BackendConfig, BackendKind, Exchange, ExchangeStatus, ReplayStore
from .metrics import MetricsSummary, compute, pairwise_accuracy, row_average, variation_stats
from .parsing import Judgment, JudgmentKind, ParsedResponse, normalize_judgment, parse
from .prompts import Method, PromptVariant, RenderedPrompt, render, render_variant_suite
from .records import Alignment, EvalRecord, read_records
from .theories import (
    InstructionTemplate,
    TaskShape,
    Theory,
    TheoryKind,
    get_template,
    list_supported,
)
from .triage import Breakdown, ErrorCategory, TriageCase, breakdown, export_misaligned

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "BackendConfig",
    "BackendKind",
    "Breakdown",
    "DatasetSpec",
    "ErrorCategory",
    "EvalRecord",
    "Exchange",
    "ExchangeStatus",
    "GoldLabel",
    "InstructionTemplate",
    "Judgment",
    "JudgmentKind",
    "Method",
    "MetricsSummary",
    "ParsedResponse",
    "PromptVariant",
    "RenderedPrompt",
    "ReplayStore",
    "RunSpec",
    "RunSummary",
    "TaskShape",
    "TestCase",
    "Theory",
    "TheoryKind",
    "TriageCase",
    "breakdown",
    "compute",
    "cross_matrix",
    "export_misaligned",
    "get_template",
    "list_supported",
    "load",
    "normalize_judgment",
    "pairwise_accuracy",
    "parse",
    "preprocess_social_chem",
    "read_records",
    "render",
    "render_variant_suite",
    "row_average",
    "run",
    "sample",
    "variation_stats",
]
