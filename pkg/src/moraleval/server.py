"""HTTP service around the core: the triage API plus audit endpoints.

The triage UI consumes the JSON API below; the same app also exposes
rendering, parsing, template export, and report generation so reviewers can
audit a run from a browser or script without a local checkout of the data.

State is the runs root directory: every subdirectory with a manifest.json is
a run. Annotation writes are serialized per run store.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .datasets import TestCase, read_cases_jsonl
from .gateway import ReplayStore
from .metrics import group_records, report_table, summarize
from .parsing import parse
from .prompts import method_from_slug, render
from .records import read_records
from .theories import Wording, export_templates_document
from .triage import (
    Breakdown,
    TriageStore,
    UnknownCaseError,
    UnknownCategoryError,
    export_misaligned,
)


class AnnotationIn(BaseModel):
    category: str
    note: str = ""
    annotator: str = Field(default="", description="reviewer name; no auth beyond this")


class RenderIn(BaseModel):
    case: dict
    method: str = "vanilla"


class ParseIn(BaseModel):
    raw: str
    case: dict
    method: str = "vanilla"


class RunRegistry:
    """Lazy view over the runs root; one TriageStore per run directory."""

    def __init__(self, runs_root: Path) -> None:
        self.runs_root = Path(runs_root)
        self._stores: dict[str, TriageStore] = {}

    def run_ids(self) -> list[str]:
        if not self.runs_root.exists():
            return []
        return sorted(
            p.name for p in self.runs_root.iterdir() if (p / "manifest.json").exists()
        )

    def run_dir(self, run_id: str) -> Path:
        path = self.runs_root / run_id
        if not (path / "manifest.json").exists():
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return path

    def manifest(self, run_id: str) -> dict:
        return json.loads((self.run_dir(run_id) / "manifest.json").read_text(encoding="utf-8"))

    def store(self, run_id: str) -> TriageStore:
        if run_id not in self._stores:
            self._stores[run_id] = TriageStore(self.run_dir(run_id))
        return self._stores[run_id]

    def cases_for(self, run_id: str) -> list[TestCase]:
        manifest = self.manifest(run_id)
        return read_cases_jsonl(manifest["case_file"])

    def ensure_queue(self, run_id: str) -> TriageStore:
        """Build the triage queue from records on first access."""
        store = self.store(run_id)
        if store.queue_path.exists():
            return store
        run_dir = self.run_dir(run_id)
        records = read_records(run_dir / "records.jsonl")
        cases = self.cases_for(run_id)
        responses: dict[str, str] = {}
        responses_path = run_dir / "responses.jsonl"
        if responses_path.exists():
            responses = ReplayStore(responses_path).by_hash()
        store.write_queue(export_misaligned(records, cases, responses))
        return store


def create_app(runs_root: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="moraleval", version="0.1.0")
    registry = RunRegistry(Path(runs_root))
    app.state.registry = registry

    @app.get("/api/runs")
    def list_runs() -> list[dict]:
        out = []
        for run_id in registry.run_ids():
            store = registry.ensure_queue(run_id)
            queue = store.load()
            done = sum(1 for tc in queue if tc.annotation is not None)
            out.append(
                {
                    "run_id": run_id,
                    "queue_size": len(queue),
                    "pending": len(queue) - done,
                    "done": done,
                }
            )
        return out

    @app.get("/api/runs/{run_id}/queue")
    def get_queue(run_id: str, status: str = Query(default="pending")) -> dict:
        if status not in ("pending", "done", "all"):
            raise HTTPException(status_code=422, detail="status must be pending, done, or all")
        store = registry.ensure_queue(run_id)
        queue = store.load()
        done = [tc for tc in queue if tc.annotation is not None]
        pending = [tc for tc in queue if tc.annotation is None]
        selected = {"pending": pending, "done": done, "all": queue}[status]
        return {
            "run_id": run_id,
            "pending": len(pending),
            "done": len(done),
            "cases": [tc.to_dict() for tc in selected],
        }

    @app.post("/api/cases/{case_id}/annotation")
    def annotate(case_id: str, body: AnnotationIn, run: str | None = None) -> dict:
        run_ids = [run] if run else registry.run_ids()
        for run_id in run_ids:
            store = registry.ensure_queue(run_id)
            try:
                store.resolve_uid(case_id)
            except UnknownCaseError:
                continue
            try:
                updated = store.annotate(case_id, body.category, body.note, body.annotator)
            except UnknownCategoryError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            return updated.to_dict()
        raise HTTPException(status_code=404, detail=f"no triage case {case_id!r} in any run")

    @app.get("/api/runs/{run_id}/breakdown")
    def get_breakdown(run_id: str) -> dict:
        store = registry.ensure_queue(run_id)
        result: Breakdown = store.breakdown(run_id)
        return result.to_dict()

    @app.get("/api/templates")
    def templates(wording: str = "default") -> dict:
        return export_templates_document(Wording(wording))

    @app.post("/api/render")
    def render_prompt(body: RenderIn) -> dict:
        try:
            case = TestCase.from_dict(body.case)
            method = method_from_slug(body.method)
            prompt = render(case, method)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {
            "text": prompt.text,
            "expected_keys": list(prompt.expected_keys),
            "judgment_key": prompt.judgment_key,
            "judgment_domain": prompt.judgment_domain.value,
            "prompt_hash": prompt.prompt_hash,
        }

    @app.post("/api/parse")
    def parse_response(body: ParseIn) -> dict:
        try:
            case = TestCase.from_dict(body.case)
            method = method_from_slug(body.method)
            prompt = render(case, method)
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        parsed = parse(body.raw, prompt)
        return {
            "fields": parsed.fields,
            "extras": parsed.extras,
            "judgment": parsed.judgment.kind.value,
            "refusal_reason": parsed.judgment.refusal_reason.value
            if parsed.judgment.refusal_reason
            else None,
            "raw_token": parsed.judgment.raw_token,
            "recovery_path": parsed.recovery_path.value,
        }

    @app.get("/api/runs/{run_id}/report")
    def report(run_id: str, format: str = "md"):
        run_dir = registry.run_dir(run_id)
        records = read_records(run_dir / "records.jsonl")
        by_method_records, datasets = group_records(records)
        by_method = {
            method: {ds: summarize(recs) for ds, recs in per_ds.items()}
            for method, per_ds in by_method_records.items()
        }
        try:
            table = report_table(by_method, datasets, fmt=format)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return PlainTextResponse(table)

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/")
        def index() -> JSONResponse:
            return JSONResponse(
                {"service": "moraleval", "api": "/api/runs", "docs": "/docs"}
            )

    return app
