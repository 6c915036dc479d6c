"""Single entry point for the whole workflow.

Exit statuses: 0 on success, 1 on user error (with a usage message), 2 on
runtime failure (with a diagnostic). Every command prints the paths it wrote
as ``wrote: <path>`` lines so scripts can pick them up.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import engine
from .datasets import (
    DatasetLoadError,
    DatasetSpec,
    SampleSizeError,
    load as load_dataset,
    read_cases_jsonl,
    sample as sample_cases,
    write_cases_jsonl,
)
from .gateway import BackendConfig, BackendKind, ReplayStore
from .metrics import group_records, report_table, summarize
from .parsing import parse as parse_response
from .prompts import method_from_slug, render, render_variant_suite
from .records import read_records
from .theories import Wording, export_templates_document, theory_from_slug
from .triage import TriageStore, export_misaligned

# Sampling sizes the study used: 1k per commonsense set, 200 per
# theory-guided set, 200 for triage export.
COMMONSENSE_SAMPLE = 1000
THEORY_SAMPLE = 200
TRIAGE_SAMPLE = 200

PRESETS = {
    "theory-bench": {
        "datasets": ["ethics-justice", "ethics-deontology", "ethics-util"],
        "sample_n": THEORY_SAMPLE,
        "methods": ["vanilla", "justice", "deontology", "utilitarianism", "tdm-gen"],
    },
    "commonsense-bench": {
        "datasets": ["e-cm-normal", "e-cm-hard", "social-chem-101"],
        "sample_n": COMMONSENSE_SAMPLE,
        "methods": ["vanilla", "tdm-gen", "tdm-en", "justice", "deontology", "utilitarianism"],
    },
}


class RuntimeFailure(RuntimeError):
    """Anything that should exit 2 with a diagnostic."""


def _wrote(path: Path | str) -> None:
    click.echo(f"wrote: {Path(path).resolve()}")


def _load_backend_config(value: str) -> BackendConfig:
    path = Path(value)
    if path.exists():
        return BackendConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))
    if value in ("rule-mock", "rule_mock"):
        return BackendConfig(kind=BackendKind.RULE_MOCK)
    raise click.UsageError(f"--backend must be a config file path or 'rule-mock', got {value!r}")


@click.group()
def cli() -> None:
    """Theory-guided moral judgment evaluation harness."""


@cli.command("prepare-data")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--sample", "sample_n", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def prepare_data(spec_path: str, out_path: str, sample_n: int | None, seed: int) -> None:
    """Ingest an external dataset file into canonical case JSONL."""
    spec = DatasetSpec.from_json_file(spec_path)
    try:
        result = load_dataset(spec)
    except FileNotFoundError as exc:
        raise RuntimeFailure(str(exc)) from exc
    except DatasetLoadError as exc:
        raise RuntimeFailure(str(exc)) from exc
    cases = result.cases
    if sample_n is not None:
        try:
            cases = sample_cases(cases, sample_n, seed)
        except SampleSizeError as exc:
            raise click.UsageError(str(exc)) from exc
    write_cases_jsonl(cases, out_path)
    manifest = {
        "source_spec": str(Path(spec_path).resolve()),
        "dataset": spec.name,
        "cases": len(cases),
        "skipped": len(result.skipped),
        "sample": sample_n,
        "seed": seed,
    }
    manifest_path = Path(out_path).with_suffix(Path(out_path).suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for skip in result.skipped[:10]:
        click.echo(f"skipped row {skip.row_index}: {skip.reason} ({skip.kind})", err=True)
    if len(result.skipped) > 10:
        click.echo(f"... and {len(result.skipped) - 10} more skipped rows", err=True)
    click.echo(f"cases: {len(cases)}")
    _wrote(out_path)
    _wrote(manifest_path)


def _run_one(spec: engine.RunSpec) -> None:
    try:
        summary = engine.run(spec)
    except engine.RunSetupError as exc:
        raise RuntimeFailure(str(exc)) from exc
    for method, counts in summary.per_method.items():
        click.echo(
            f"{spec.run_id} {method}: total={counts['total']} aligned={counts['aligned']} "
            f"misaligned={counts['misaligned']} excluded={counts['excluded']}"
        )
    _wrote(spec.records_path)


@cli.command("run")
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--data-dir", type=click.Path(file_okay=False), default=None)
@click.option("--backend", "backend_value", default=None, help="Backend config file or 'rule-mock'.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="runs", show_default=True)
@click.option("--run-id", default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--strict-hash", is_flag=True, default=False)
def run_cmd(
    spec_path: str | None,
    preset: str | None,
    data_dir: str | None,
    backend_value: str | None,
    out_dir: str,
    run_id: str | None,
    seed: int,
    strict_hash: bool,
) -> None:
    """Execute a run spec, or a preset expanding to the full method x dataset matrix."""
    if (spec_path is None) == (preset is None):
        raise click.UsageError("provide exactly one of --spec or --preset")

    if spec_path is not None:
        d = json.loads(Path(spec_path).read_text(encoding="utf-8"))
        backend_cfg = (
            BackendConfig.from_dict(d["backend"])
            if isinstance(d.get("backend"), dict)
            else _load_backend_config(d["backend"])
        )
        sample = None
        if d.get("sample"):
            sample = (int(d["sample"]["n"]), int(d["sample"].get("seed", seed)))
        spec = engine.RunSpec(
            run_id=d["run_id"],
            methods=tuple(method_from_slug(m) for m in d["methods"]),
            case_file=d["case_file"],
            backend=backend_cfg,
            out_dir=d.get("out_dir", out_dir),
            sample=sample,
            strict_hash=strict_hash or bool(d.get("strict_hash", False)),
        )
        _run_one(spec)
        return

    if data_dir is None or backend_value is None:
        raise click.UsageError("--preset requires --data-dir and --backend")
    config = PRESETS[preset]
    backend_cfg = _load_backend_config(backend_value)
    base_id = run_id or preset
    for method_slug in config["methods"]:
        for dataset in config["datasets"]:
            case_file = Path(data_dir) / f"{dataset}.jsonl"
            if not case_file.exists():
                raise RuntimeFailure(f"missing case file {case_file}")
            population = len(read_cases_jsonl(case_file))
            n = min(config["sample_n"], population)
            spec = engine.RunSpec(
                run_id=f"{base_id}-{method_slug}-{dataset}",
                methods=(method_from_slug(method_slug),),
                case_file=str(case_file),
                backend=backend_cfg,
                out_dir=out_dir,
                sample=(n, seed),
                strict_hash=strict_hash,
            )
            _run_one(spec)


@cli.command("report")
@click.option("--run", "run_ids", required=True, multiple=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="runs", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["md", "csv"]), default="md", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--count-excluded-as-misaligned", is_flag=True, default=False)
def report_cmd(
    run_ids: tuple[str, ...],
    out_dir: str,
    fmt: str,
    out_path: str | None,
    count_excluded_as_misaligned: bool,
) -> None:
    """Emit a P/R/Acc table over one or more finished runs."""
    records = []
    for run_id in run_ids:
        path = Path(out_dir) / run_id / "records.jsonl"
        if not path.exists():
            raise RuntimeFailure(f"no records for run {run_id!r} under {out_dir}")
        records.extend(read_records(path))
    by_method_records, datasets = group_records(records)
    by_method = {
        method: {
            ds: summarize(recs, count_excluded_as_misaligned) for ds, recs in per_ds.items()
        }
        for method, per_ds in by_method_records.items()
    }
    table = report_table(by_method, datasets, fmt=fmt)
    click.echo(table, nl=False)
    if out_path:
        Path(out_path).write_text(table, encoding="utf-8")
        _wrote(out_path)


@cli.command("render")
@click.option("--cases", "cases_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--case-id", required=True)
@click.option("--method", "method_slug", required=True)
def render_cmd(cases_path: str, case_id: str, method_slug: str) -> None:
    """Print the exact prompt for one (case, method) pair."""
    cases = {c.id: c for c in read_cases_jsonl(cases_path)}
    if case_id not in cases:
        raise click.UsageError(f"case {case_id!r} not in {cases_path}")
    try:
        method = method_from_slug(method_slug)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    prompt = render(cases[case_id], method)
    click.echo(prompt.text)
    click.echo(f"# prompt_hash: {prompt.prompt_hash}", err=True)


@cli.command("variants")
@click.option("--cases", "cases_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--case-id", required=True)
@click.option("--theory", "theory_slug", required=True)
def variants_cmd(cases_path: str, case_id: str, theory_slug: str) -> None:
    """Print the three variation prompts (default, choice-order, brackets)."""
    cases = {c.id: c for c in read_cases_jsonl(cases_path)}
    if case_id not in cases:
        raise click.UsageError(f"case {case_id!r} not in {cases_path}")
    try:
        theory = theory_from_slug(theory_slug)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    labels = ["default", "choice-order-swapped", "bracket-style-swapped"]
    for label, prompt in zip(labels, render_variant_suite(cases[case_id], theory)):
        click.echo(f"=== {label} (hash {prompt.prompt_hash}) ===")
        click.echo(prompt.text)
        click.echo("")


@cli.command("export-templates")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option(
    "--wording", type=click.Choice([w.value for w in Wording]), default="default", show_default=True
)
def export_templates_cmd(out_path: str | None, wording: str) -> None:
    """Dump the instruction-template registry as JSON for review."""
    doc = export_templates_document(Wording(wording))
    text = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        _wrote(out_path)
    else:
        click.echo(text, nl=False)


@cli.command("export-misaligned")
@click.option("--run", "run_id", required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="runs", show_default=True)
@click.option("--sample", "sample_n", type=int, default=None, help="Fresh subsample of the queue.")
@click.option("--seed", type=int, default=0, show_default=True)
def export_misaligned_cmd(run_id: str, out_dir: str, sample_n: int | None, seed: int) -> None:
    """Build the triage queue for a finished run."""
    run_dir = Path(out_dir) / run_id
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise RuntimeFailure(f"no run {run_id!r} under {out_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    records = read_records(run_dir / "records.jsonl")
    cases = read_cases_jsonl(manifest["case_file"])
    responses = {}
    responses_path = run_dir / "responses.jsonl"
    if responses_path.exists():
        responses = ReplayStore(responses_path).by_hash()
    queue = export_misaligned(records, cases, responses)
    if sample_n is not None and sample_n < len(queue):
        import random as _random

        rng = _random.Random(seed)
        order = list(range(len(queue)))
        for i in range(sample_n):
            j = rng.randrange(i, len(order))
            order[i], order[j] = order[j], order[i]
        queue = [queue[i] for i in sorted(order[:sample_n])]
    store = TriageStore(run_dir)
    store.write_queue(queue)
    export_manifest = {
        "run_id": run_id,
        "queue_size": len(queue),
        "sample": sample_n,
        "seed": seed,
    }
    manifest_out = run_dir / "triage_queue.manifest.json"
    manifest_out.write_text(json.dumps(export_manifest, indent=2) + "\n", encoding="utf-8")
    click.echo(f"queue: {len(queue)} misaligned cases (seed={seed})")
    _wrote(store.queue_path)
    _wrote(manifest_out)


@cli.command("serve-triage")
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--runs-root", type=click.Path(file_okay=False), default="runs", show_default=True)
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None)
def serve_triage_cmd(port: int, host: str, runs_root: str, ui_dir: str | None) -> None:
    """Serve the triage HTTP API (and the UI bundle when present)."""
    import uvicorn

    from .server import create_app

    app = create_app(Path(runs_root), Path(ui_dir) if ui_dir else None)
    uvicorn.run(app, host=host, port=port, log_level="info")


@cli.command("parse")
@click.option("--fixture", "fixture_path", required=True, type=click.Path(exists=True, dir_okay=False))
def parse_cmd(fixture_path: str) -> None:
    """Debug one raw response: fixture JSON with raw, case, and method keys."""
    from .datasets import TestCase

    d = json.loads(Path(fixture_path).read_text(encoding="utf-8"))
    try:
        case = TestCase.from_dict(d["case"])
        method = method_from_slug(d.get("method", "vanilla"))
    except (KeyError, ValueError) as exc:
        raise click.UsageError(f"bad fixture: {exc}") from exc
    prompt = render(case, method)
    parsed = parse_response(d["raw"], prompt)
    click.echo(
        json.dumps(
            {
                "fields": parsed.fields,
                "extras": parsed.extras,
                "judgment": parsed.judgment.kind.value,
                "refusal_reason": parsed.judgment.refusal_reason.value
                if parsed.judgment.refusal_reason
                else None,
                "raw_token": parsed.judgment.raw_token,
                "recovery_path": parsed.recovery_path.value,
            },
            indent=2,
            ensure_ascii=False,
        )
    )


def main(argv: list[str] | None = None) -> int:
    """Dispatch with the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except RuntimeFailure as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status 2
        click.echo(f"runtime failure: {type(exc).__name__}: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
