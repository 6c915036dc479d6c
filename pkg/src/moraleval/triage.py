"""Human triage of misaligned cases.

Misaligned records are exported into a review queue carrying the model's
theory-guided reasoning verbatim, so a reviewer can attribute each
misalignment to one of four error categories: inappropriate annotation
(data-a), insufficient context (data-b), wrong moral reasoning (llm-c), or
overestimating unlikely risks (llm-d).

Annotations live in their own append-only JSONL file, separate from records,
so re-running an evaluation never touches human work. The latest annotation
per case wins; everything earlier stays in the history.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .datasets import GoldLabel, TestCase
from .parsing import JudgmentKind, parse
from .prompts import method_from_slug, render
from .records import Alignment, EvalRecord


class ErrorCategory(str, Enum):
    DATA_INAPPROPRIATE_ANNOTATION = "data-a"
    DATA_INSUFFICIENT_CONTEXT = "data-b"
    LLM_WRONG_REASONING = "llm-c"
    LLM_OVERESTIMATED_RISK = "llm-d"


CATEGORY_ORDER = (
    ErrorCategory.DATA_INAPPROPRIATE_ANNOTATION,
    ErrorCategory.DATA_INSUFFICIENT_CONTEXT,
    ErrorCategory.LLM_WRONG_REASONING,
    ErrorCategory.LLM_OVERESTIMATED_RISK,
)


class UnknownCaseError(KeyError):
    pass


class UnknownCategoryError(ValueError):
    def __init__(self, wire_name: str) -> None:
        valid = ", ".join(c.value for c in CATEGORY_ORDER)
        super().__init__(f"unknown error category {wire_name!r}; expected one of: {valid}")
        self.wire_name = wire_name


class DanglingCaseError(ValueError):
    def __init__(self, case_ids: list[str]) -> None:
        super().__init__(f"records reference case ids missing from the case list: {case_ids}")
        self.case_ids = case_ids


@dataclass(frozen=True)
class Annotation:
    category: ErrorCategory
    note: str
    annotator: str
    at: str

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "note": self.note,
            "annotator": self.annotator,
            "at": self.at,
        }


@dataclass
class TriageCase:
    """One misaligned (case, method) outcome awaiting review.

    ``uid`` is the queue key: the raw case id when it is unique in the queue,
    otherwise suffixed with the method slug.
    """

    uid: str
    case_id: str
    method: str
    scenario: str
    gold: GoldLabel
    judgment: JudgmentKind
    scenario_b: str | None = None
    statement: str | None = None
    raw_token: str = ""
    analysis_fields: dict[str, str] = field(default_factory=dict)
    annotation: Annotation | None = None
    history: list[Annotation] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "uid": self.uid,
            "case_id": self.case_id,
            "method": self.method,
            "scenario": self.scenario,
            "scenario_b": self.scenario_b,
            "statement": self.statement,
            "gold": self.gold.value,
            "judgment": self.judgment.value,
            "raw_token": self.raw_token,
            "analysis_fields": dict(self.analysis_fields),
            "annotation": self.annotation.to_dict() if self.annotation else None,
            "history": [a.to_dict() for a in self.history],
        }


@dataclass(frozen=True)
class Breakdown:
    label: str
    counts: dict[ErrorCategory, int]
    percentages: dict[ErrorCategory, int]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "counts": {c.value: self.counts[c] for c in CATEGORY_ORDER},
            "percentages": {c.value: self.percentages[c] for c in CATEGORY_ORDER},
        }


def largest_remainder_percentages(counts: Mapping[ErrorCategory, int]) -> dict[ErrorCategory, int]:
    """Integer percentages that always sum to 100 (for any non-empty total).

    Floors first, then hands the remaining points to the largest fractional
    remainders; ties break in fixed category order.
    """
    total = sum(counts.get(c, 0) for c in CATEGORY_ORDER)
    if total == 0:
        return {c: 0 for c in CATEGORY_ORDER}
    exact = {c: 100.0 * counts.get(c, 0) / total for c in CATEGORY_ORDER}
    floors = {c: int(exact[c]) for c in CATEGORY_ORDER}
    leftover = 100 - sum(floors.values())
    by_remainder = sorted(
        CATEGORY_ORDER, key=lambda c: (-(exact[c] - floors[c]), CATEGORY_ORDER.index(c))
    )
    for c in by_remainder[:leftover]:
        floors[c] += 1
    return floors


def breakdown(annotations: Iterable[ErrorCategory], label: str) -> Breakdown:
    counts = {c: 0 for c in CATEGORY_ORDER}
    for category in annotations:
        counts[ErrorCategory(category)] += 1
    return Breakdown(label=label, counts=counts, percentages=largest_remainder_percentages(counts))


def export_misaligned(
    records: Iterable[EvalRecord],
    cases: Iterable[TestCase],
    responses: Mapping[str, str] | None = None,
) -> list[TriageCase]:
    """One triage case per misaligned record, in (case_id, method) order.

    ``responses`` maps prompt_hash to raw response text; when provided, the
    model's analysis fields are re-parsed out of it for reviewer context.
    """
    by_id = {c.id: c for c in cases}
    misaligned = [r for r in records if r.aligned is Alignment.MISALIGNED]
    dangling = sorted({r.case_id for r in misaligned if r.case_id not in by_id})
    if dangling:
        raise DanglingCaseError(dangling)

    misaligned.sort(key=lambda r: (r.case_id, r.method))
    id_counts: dict[str, int] = {}
    for r in misaligned:
        id_counts[r.case_id] = id_counts.get(r.case_id, 0) + 1

    out: list[TriageCase] = []
    for r in misaligned:
        case = by_id[r.case_id]
        uid = r.case_id if id_counts[r.case_id] == 1 else f"{r.case_id}::{r.method}"
        analysis: dict[str, str] = {}
        if responses is not None and r.prompt_hash in responses:
            analysis = _reparse_analysis(case, r.method, responses[r.prompt_hash])
        out.append(
            TriageCase(
                uid=uid,
                case_id=r.case_id,
                method=r.method,
                scenario=case.scenario,
                scenario_b=case.scenario_b,
                statement=case.statement,
                gold=r.gold,
                judgment=r.judgment,
                raw_token=r.raw_token,
                analysis_fields=analysis,
            )
        )
    return out


def _reparse_analysis(case: TestCase, method_slug: str, raw_response: str) -> dict[str, str]:
    try:
        method = method_from_slug(method_slug)
        prompt = render(case, method)
        return dict(parse(raw_response, prompt).fields)
    except Exception:
        return {}


class TriageStore:
    """Queue file plus append-only annotation log for one run directory."""

    QUEUE_FILE = "triage_queue.jsonl"
    ANNOTATIONS_FILE = "annotations.jsonl"

    def __init__(self, run_dir: str | Path) -> None:
        self.run_dir = Path(run_dir)
        self._lock = threading.Lock()

    @property
    def queue_path(self) -> Path:
        return self.run_dir / self.QUEUE_FILE

    @property
    def annotations_path(self) -> Path:
        return self.run_dir / self.ANNOTATIONS_FILE

    def write_queue(self, triage_cases: list[TriageCase]) -> int:
        with self._lock:
            with self.queue_path.open("w", encoding="utf-8") as f:
                for tc in triage_cases:
                    base = tc.to_dict()
                    base.pop("annotation")
                    base.pop("history")
                    f.write(json.dumps(base, ensure_ascii=False) + "\n")
        return len(triage_cases)

    def _read_queue(self) -> list[TriageCase]:
        if not self.queue_path.exists():
            return []
        out = []
        with self.queue_path.open(encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                out.append(
                    TriageCase(
                        uid=d["uid"],
                        case_id=d["case_id"],
                        method=d["method"],
                        scenario=d["scenario"],
                        scenario_b=d.get("scenario_b"),
                        statement=d.get("statement"),
                        gold=GoldLabel(d["gold"]),
                        judgment=JudgmentKind(d["judgment"]),
                        raw_token=d.get("raw_token", ""),
                        analysis_fields=dict(d.get("analysis_fields", {})),
                    )
                )
        return out

    def _read_annotation_events(self) -> list[dict]:
        if not self.annotations_path.exists():
            return []
        events = []
        with self.annotations_path.open(encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events

    def load(self) -> list[TriageCase]:
        """Queue with annotations merged in: latest wins, history appended in
        event order."""
        queue = self._read_queue()
        by_uid = {tc.uid: tc for tc in queue}
        for event in self._read_annotation_events():
            tc = by_uid.get(event["uid"])
            if tc is None:
                continue
            annotation = Annotation(
                category=ErrorCategory(event["category"]),
                note=event.get("note", ""),
                annotator=event.get("annotator", ""),
                at=event.get("at", ""),
            )
            tc.history.append(annotation)
            tc.annotation = annotation
        return queue

    def resolve_uid(self, key: str) -> str:
        """Accept a queue uid, or a raw case id when it is unambiguous."""
        queue = self._read_queue()
        uids = {tc.uid for tc in queue}
        if key in uids:
            return key
        matches = [tc.uid for tc in queue if tc.case_id == key]
        if len(matches) == 1:
            return matches[0]
        if len(matches) > 1:
            raise UnknownCaseError(f"case id {key!r} is ambiguous; use one of {sorted(matches)}")
        raise UnknownCaseError(f"no triage case {key!r} in queue")

    def annotate(self, key: str, category: str, note: str, annotator: str) -> TriageCase:
        """Record an annotation; persisted before returning the updated case."""
        try:
            cat = ErrorCategory(category)
        except ValueError:
            raise UnknownCategoryError(category) from None
        with self._lock:
            uid = self.resolve_uid(key)
            event = {
                "uid": uid,
                "category": cat.value,
                "note": note,
                "annotator": annotator,
                "at": datetime.now(timezone.utc).isoformat(),
            }
            with self.annotations_path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(event, ensure_ascii=False) + "\n")
                f.flush()
        for tc in self.load():
            if tc.uid == uid:
                return tc
        raise UnknownCaseError(uid)  # pragma: no cover

    def breakdown(self, label: str) -> Breakdown:
        latest: dict[str, ErrorCategory] = {}
        queue_uids = {tc.uid for tc in self._read_queue()}
        for event in self._read_annotation_events():
            if event["uid"] in queue_uids:
                latest[event["uid"]] = ErrorCategory(event["category"])
        return breakdown(latest.values(), label)
