"""Execute a methods-by-cases run matrix with bounded concurrency and
append-only persistence.

Worker threads render, complete, and parse concurrently (never more than the
backend's concurrency limit in flight); a single writer appends finished
records in submission order, so records.jsonl is byte-stable across runs once
timestamps are ignored. Resumption keys on (case_id, method): pairs already
persisted are never re-run, and a torn final line from a killed process is
simply redone.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .datasets import TestCase, read_cases_jsonl, sample
from .gateway import (
    BackendConfig,
    BackendKind,
    ExchangeStatus,
    ReplayStore,
    build_backend,
)
from .parsing import Judgment, JudgmentKind, RecoveryPath, parse
from .prompts import Method, render
from .records import EvalRecord, classify_alignment, read_records
from .theories import TEMPLATE_REGISTRY_VERSION, Theory


class RunSetupError(RuntimeError):
    """Unloadable case file or unwritable output directory."""


@dataclass(frozen=True)
class RunSpec:
    run_id: str
    methods: tuple[Method, ...]
    case_file: str
    backend: BackendConfig
    out_dir: str
    sample: tuple[int, int] | None = None  # (n, seed)
    strict_hash: bool = False

    def __post_init__(self) -> None:
        if not self.methods:
            raise ValueError("a run needs at least one method")

    @property
    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.run_id

    @property
    def records_path(self) -> Path:
        return self.run_dir / "records.jsonl"

    @property
    def responses_path(self) -> Path:
        return self.run_dir / "responses.jsonl"

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest.json"


@dataclass
class RunSummary:
    run_id: str
    per_method: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(m["total"] for m in self.per_method.values())


def _load_cases(spec: RunSpec) -> list[TestCase]:
    try:
        cases = read_cases_jsonl(spec.case_file)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise RunSetupError(f"cannot load case file {spec.case_file}: {exc}") from exc
    if spec.sample is not None:
        n, seed = spec.sample
        cases = sample(cases, n, seed)
    return cases


def write_manifest(spec: RunSpec) -> None:
    manifest = {
        "run_id": spec.run_id,
        "case_file": str(Path(spec.case_file).resolve()),
        "sample": {"n": spec.sample[0], "seed": spec.sample[1]} if spec.sample else None,
        "seed": spec.sample[1] if spec.sample else None,
        "methods": [m.slug for m in spec.methods],
        "backend": {
            "kind": spec.backend.kind.value,
            "model_name": spec.backend.model_name,
            "config_digest": spec.backend.digest,
        },
        "template_version": TEMPLATE_REGISTRY_VERSION,
        "records_file": "records.jsonl",
        "responses_file": "responses.jsonl",
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    spec.manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _compact_stale_records(
    spec: RunSpec, cases: list[TestCase], existing: list[EvalRecord]
) -> list[EvalRecord]:
    """Drop records whose stored prompt hash no longer matches a re-render
    (templates changed), rewriting the file atomically."""
    by_id = {c.id: c for c in cases}
    methods = {m.slug: m for m in spec.methods}
    kept: list[EvalRecord] = []
    dropped = 0
    for record in existing:
        case = by_id.get(record.case_id)
        method = methods.get(record.method)
        if case is not None and method is not None and record.prompt_hash:
            if render(case, method).prompt_hash != record.prompt_hash:
                dropped += 1
                continue
        kept.append(record)
    if dropped:
        tmp = spec.records_path.with_suffix(".jsonl.tmp")
        with tmp.open("w", encoding="utf-8") as f:
            for record in kept:
                f.write(record.to_json_line())
        os.replace(tmp, spec.records_path)
    return kept


def _evaluate_pair(
    case: TestCase, method: Method, backend, response_store: ReplayStore | None
) -> EvalRecord:
    prompt_hash = ""
    judgment = Judgment(JudgmentKind.UNPARSEABLE, raw_token="")
    recovery = RecoveryPath.NONE
    status = ExchangeStatus.TRANSPORT_ERROR
    try:
        prompt = render(case, method)
        prompt_hash = prompt.prompt_hash
        exchange = backend.complete(prompt)
        status = exchange.status
        if status is ExchangeStatus.OK:
            parsed = parse(exchange.raw_response, prompt)
            judgment = parsed.judgment
            recovery = parsed.recovery_path
            if judgment.kind in (JudgmentKind.CHOOSE_FIRST, JudgmentKind.CHOOSE_SECOND):
                judgment = _remap_choice(judgment, prompt.choice_remap)
            if response_store is not None:
                response_store.record(exchange)
    except Exception:
        # Per-case failures (replay misses, shape mismatches, store
        # conflicts) become excluded records rather than aborting the run.
        judgment = Judgment(JudgmentKind.UNPARSEABLE, raw_token="")
        recovery = RecoveryPath.NONE
        status = ExchangeStatus.TRANSPORT_ERROR
    aligned = classify_alignment(judgment, case.gold, status)
    return EvalRecord(
        case_id=case.id,
        method=method.slug,
        prompt_hash=prompt_hash,
        judgment=judgment.kind,
        refusal_reason=judgment.refusal_reason,
        raw_token=judgment.raw_token,
        gold=case.gold,
        aligned=aligned,
        exchange_status=status,
        recovery_path=recovery,
    )


def _remap_choice(judgment: Judgment, remap: tuple[int, int]) -> Judgment:
    """Map a presented-order choice back to dataset order before scoring."""
    answer_index = 0 if judgment.kind is JudgmentKind.CHOOSE_FIRST else 1
    dataset_index = remap[answer_index]
    kind = JudgmentKind.CHOOSE_FIRST if dataset_index == 0 else JudgmentKind.CHOOSE_SECOND
    return Judgment(kind, raw_token=judgment.raw_token)


def run(spec: RunSpec) -> RunSummary:
    """Evaluate every (case, method) pair not already persisted.

    Fatal only on an unwritable out_dir or unloadable case file; anything
    that fails per case is persisted as an excluded record.
    """
    cases = _load_cases(spec)
    try:
        spec.run_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(spec)
    except OSError as exc:
        raise RunSetupError(f"cannot prepare run dir {spec.run_dir}: {exc}") from exc

    existing = read_records(spec.records_path)
    if spec.strict_hash and existing:
        existing = _compact_stale_records(spec, cases, existing)
    done = {(r.case_id, r.method) for r in existing}

    pending = [
        (case, method)
        for method in spec.methods
        for case in cases
        if (case.id, method.slug) not in done
    ]

    backend = build_backend(spec.backend)
    response_store = None
    if spec.backend.kind is not BackendKind.REPLAY:
        response_store = ReplayStore(spec.responses_path)

    executor = ThreadPoolExecutor(max_workers=spec.backend.concurrency_limit)
    futures: list[Future[EvalRecord]] = [
        executor.submit(_evaluate_pair, case, method, backend, response_store)
        for case, method in pending
    ]
    try:
        with spec.records_path.open("a", encoding="utf-8") as f:
            for future in futures:
                record = future.result()
                f.write(record.to_json_line())
                f.flush()
    finally:
        executor.shutdown(wait=True, cancel_futures=True)

    return summarize_run(spec)


def summarize_run(spec: RunSpec) -> RunSummary:
    """Counts per method, computed from the persisted file only."""
    summary = RunSummary(run_id=spec.run_id)
    for record in read_records(spec.records_path):
        counts = summary.per_method.setdefault(
            record.method, {"total": 0, "aligned": 0, "misaligned": 0, "excluded": 0}
        )
        counts["total"] += 1
        counts[record.aligned.value] += 1
    return summary


def cross_matrix(
    theories: list[Theory], datasets: list[tuple[str, str]], base: RunSpec
) -> list[RunSpec]:
    """Expand a base spec into the full theory x dataset product, one run per
    cell, with derived ids "<base>-<theory>-<dataset>"."""
    specs = []
    for theory in theories:
        for dataset_name, case_file in datasets:
            specs.append(
                RunSpec(
                    run_id=f"{base.run_id}-{theory.slug}-{dataset_name}",
                    methods=(Method(theory),),
                    case_file=case_file,
                    backend=base.backend,
                    out_dir=base.out_dir,
                    sample=base.sample,
                    strict_hash=base.strict_hash,
                )
            )
    return specs
