"""Dataset ingestion: external morality files to the canonical case form.

External file schemas are configuration, not code. A DatasetSpec declares the
file format, a column map, and the label semantics; the shipped example specs
under moraleval/specs are marked "verify against your copy" because upstream
releases differ in column layout. The canonical internal format is JSONL, one
TestCase per line, and it is the only format the eval engine reads.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .theories import TaskShape


class GoldLabel(str, Enum):
    WRONG = "wrong"
    NOT_WRONG = "not_wrong"
    REASONABLE = "reasonable"
    UNREASONABLE = "unreasonable"
    FIRST_MORE_PLEASANT = "first_more_pleasant"


GOLD_FOR_SHAPE = {
    TaskShape.SINGLE_SCENARIO: {GoldLabel.WRONG, GoldLabel.NOT_WRONG},
    TaskShape.EXEMPTION_OR_ROLE: {GoldLabel.REASONABLE, GoldLabel.UNREASONABLE},
    TaskShape.PAIRWISE_COMPARISON: {GoldLabel.FIRST_MORE_PLEASANT},
}


class DatasetFormat(str, Enum):
    CSV = "csv"
    TSV = "tsv"
    JSONL = "jsonl"


class Preprocess(str, Enum):
    NONE = "none"
    SOCIAL_CHEM_101 = "social_chem_101"


class DatasetLoadError(RuntimeError):
    pass


class SampleSizeError(ValueError):
    def __init__(self, n: int, population: int) -> None:
        super().__init__(f"cannot sample {n} cases from a population of {population}")
        self.n = n
        self.population = population


@dataclass(frozen=True)
class TestCase:
    """One evaluable item in canonical form.

    ``scenario_b`` is present iff the shape is pairwise; ``statement`` iff the
    shape is exemption/role. ``id`` is stable across runs: dataset name plus
    the raw row index.
    """

    __test__ = False  # not a pytest class, despite the name

    id: str
    dataset: str
    shape: TaskShape
    scenario: str
    gold: GoldLabel
    scenario_b: str | None = None
    statement: str | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.scenario.strip():
            raise ValueError(f"case {self.id}: empty scenario")
        if (self.scenario_b is not None) != (self.shape is TaskShape.PAIRWISE_COMPARISON):
            raise ValueError(f"case {self.id}: scenario_b present iff shape is pairwise")
        if (self.statement is not None) != (self.shape is TaskShape.EXEMPTION_OR_ROLE):
            raise ValueError(f"case {self.id}: statement present iff shape is exemption/role")
        if self.gold not in GOLD_FOR_SHAPE[self.shape]:
            raise ValueError(f"case {self.id}: gold {self.gold.value} invalid for {self.shape.value}")

    def to_dict(self) -> dict:
        out: dict = {
            "id": self.id,
            "dataset": self.dataset,
            "shape": self.shape.value,
            "scenario": self.scenario,
            "gold": self.gold.value,
        }
        if self.scenario_b is not None:
            out["scenario_b"] = self.scenario_b
        if self.statement is not None:
            out["statement"] = self.statement
        if self.meta:
            out["meta"] = dict(self.meta)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TestCase":
        return cls(
            id=d["id"],
            dataset=d["dataset"],
            shape=TaskShape(d["shape"]),
            scenario=d["scenario"],
            gold=GoldLabel(d["gold"]),
            scenario_b=d.get("scenario_b"),
            statement=d.get("statement"),
            meta=dict(d.get("meta", {})),
        )


@dataclass(frozen=True)
class SkipRecord:
    """Why a raw row did not become a case.

    ``malformed`` rows count toward the abort threshold; ``filtered`` rows are
    legitimate preprocessing exclusions and never abort a load.
    """

    row_index: int
    reason: str
    kind: str = "malformed"  # or "filtered"


@dataclass
class LoadResult:
    cases: list[TestCase]
    skipped: list[SkipRecord] = field(default_factory=list)

    @property
    def malformed(self) -> list[SkipRecord]:
        return [s for s in self.skipped if s.kind == "malformed"]


@dataclass(frozen=True)
class DatasetSpec:
    """Declarative description of one external dataset file."""

    name: str
    path: str
    format: DatasetFormat
    shape: TaskShape
    column_map: dict[str, str] = field(default_factory=dict)
    label_semantics: dict[str, GoldLabel] = field(default_factory=dict)
    preprocess: Preprocess = Preprocess.NONE
    has_header: bool = True

    def __post_init__(self) -> None:
        required = {"scenario"}
        if self.preprocess is Preprocess.SOCIAL_CHEM_101:
            required |= {"category", "agreement", "judgment"}
        elif self.shape is TaskShape.PAIRWISE_COMPARISON:
            required |= {"scenario_b"}
        elif self.shape is TaskShape.EXEMPTION_OR_ROLE:
            required |= {"statement", "label"}
        else:
            required |= {"label"}
        missing = required - set(self.column_map)
        if missing:
            raise ValueError(f"dataset {self.name}: column_map missing {sorted(missing)}")

    @classmethod
    def from_json_file(cls, path: str | Path) -> "DatasetSpec":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            name=d["name"],
            path=d["path"],
            format=DatasetFormat(d["format"]),
            shape=TaskShape(d["shape"]),
            column_map=dict(d.get("column_map", {})),
            label_semantics={k: GoldLabel(v) for k, v in d.get("label_semantics", {}).items()},
            preprocess=Preprocess(d.get("preprocess", "none")),
            has_header=bool(d.get("has_header", True)),
        )


def _iter_raw_rows(spec: DatasetSpec) -> Iterable[tuple[int, dict[str, str]]]:
    path = Path(spec.path)
    if spec.format is DatasetFormat.JSONL:
        with path.open(encoding="utf-8") as f:
            for i, line in enumerate(f):
                line = line.strip()
                if not line:
                    continue
                yield i, json.loads(line)
        return
    delimiter = "," if spec.format is DatasetFormat.CSV else "\t"
    with path.open(encoding="utf-8", newline="") as f:
        if spec.has_header:
            reader = csv.DictReader(f, delimiter=delimiter)
            for i, row in enumerate(reader):
                yield i, {k: (v if v is not None else "") for k, v in row.items()}
        else:
            plain = csv.reader(f, delimiter=delimiter)
            for i, cells in enumerate(plain):
                yield i, {str(j): cell for j, cell in enumerate(cells)}


def _pick(row: dict, spec: DatasetSpec, key: str) -> str:
    column = spec.column_map[key]
    if column not in row:
        raise KeyError(f"column {column!r} not in row")
    value = row[column]
    return "" if value is None else str(value)


def load(spec: DatasetSpec) -> LoadResult:
    """Read the file behind a spec into canonical cases.

    Malformed rows are collected, not fatal, unless they exceed 5% of all
    rows, in which case the load aborts with a summary.
    """
    cases: list[TestCase] = []
    skipped: list[SkipRecord] = []
    total = 0

    if spec.preprocess is Preprocess.SOCIAL_CHEM_101:
        mapped_rows: list[dict[str, str]] = []
        for i, row in _iter_raw_rows(spec):
            total += 1
            try:
                mapped_rows.append(
                    {
                        "row": str(i),
                        "category": _pick(row, spec, "category"),
                        "agreement": _pick(row, spec, "agreement"),
                        "judgment": _pick(row, spec, "judgment"),
                        "scenario": _pick(row, spec, "scenario"),
                    }
                )
            except KeyError as exc:
                skipped.append(SkipRecord(i, str(exc)))
        result = preprocess_social_chem(mapped_rows, dataset=spec.name)
        cases.extend(result.cases)
        skipped.extend(result.skipped)
    else:
        for i, row in _iter_raw_rows(spec):
            total += 1
            try:
                scenario = _pick(row, spec, "scenario").strip()
                if not scenario:
                    raise ValueError("empty scenario")
                if spec.shape is TaskShape.PAIRWISE_COMPARISON:
                    scenario_b = _pick(row, spec, "scenario_b").strip()
                    if not scenario_b:
                        raise ValueError("empty second scenario")
                    case = TestCase(
                        id=f"{spec.name}:{i}",
                        dataset=spec.name,
                        shape=spec.shape,
                        scenario=scenario,
                        scenario_b=scenario_b,
                        gold=GoldLabel.FIRST_MORE_PLEASANT,
                        meta={"row": str(i)},
                    )
                else:
                    raw_label = _pick(row, spec, "label").strip()
                    if raw_label not in spec.label_semantics:
                        raise ValueError(f"unmapped label {raw_label!r}")
                    gold = spec.label_semantics[raw_label]
                    statement = None
                    if spec.shape is TaskShape.EXEMPTION_OR_ROLE:
                        statement = _pick(row, spec, "statement").strip()
                        if not statement:
                            raise ValueError("empty statement")
                    case = TestCase(
                        id=f"{spec.name}:{i}",
                        dataset=spec.name,
                        shape=spec.shape,
                        scenario=scenario,
                        statement=statement,
                        gold=gold,
                        meta={"row": str(i)},
                    )
                cases.append(case)
            except (KeyError, ValueError) as exc:
                skipped.append(SkipRecord(i, str(exc)))

    malformed = [s for s in skipped if s.kind == "malformed"]
    if total and len(malformed) > 0.05 * total:
        sample = "; ".join(f"row {s.row_index}: {s.reason}" for s in malformed[:5])
        raise DatasetLoadError(
            f"dataset {spec.name}: {len(malformed)}/{total} rows malformed (>5%); first failures: {sample}"
        )
    return LoadResult(cases, skipped)


_SOCIAL_CHEM_CATEGORY = "morality/ethics"
_SOCIAL_CHEM_MIN_AGREEMENT = 0.75  # strictly greater-than; boundary rows are excluded
_WRONG_JUDGMENTS = {0, 1}
_NOT_WRONG_JUDGMENTS = {2, 3, 4}


def preprocess_social_chem(
    rows: list[dict[str, str]], dataset: str = "social-chem-101"
) -> LoadResult:
    """Apply the social-norms preprocessing: keep rows in the morality/ethics
    category with annotator agreement strictly above 0.75, and collapse the
    5-way judgment (0-very bad .. 4-very good) to wrong {0,1} / not wrong
    {2,3,4}."""
    cases: list[TestCase] = []
    skipped: list[SkipRecord] = []
    for i, row in enumerate(rows):
        row_index = int(row.get("row", i))
        category = str(row.get("category", "")).strip()
        scenario = str(row.get("scenario", "")).strip()
        try:
            agreement = float(str(row.get("agreement", "")).strip())
        except ValueError:
            skipped.append(SkipRecord(row_index, f"non-numeric agreement {row.get('agreement')!r}"))
            continue
        raw_judgment = str(row.get("judgment", "")).strip()
        try:
            judgment = int(float(raw_judgment))
        except ValueError:
            skipped.append(SkipRecord(row_index, f"non-numeric judgment {raw_judgment!r}"))
            continue
        if judgment not in _WRONG_JUDGMENTS | _NOT_WRONG_JUDGMENTS:
            skipped.append(SkipRecord(row_index, f"judgment {judgment} outside 0..4"))
            continue
        if not scenario:
            skipped.append(SkipRecord(row_index, "empty scenario"))
            continue
        if category != _SOCIAL_CHEM_CATEGORY:
            skipped.append(SkipRecord(row_index, f"category {category!r}", kind="filtered"))
            continue
        if not agreement > _SOCIAL_CHEM_MIN_AGREEMENT:
            skipped.append(SkipRecord(row_index, f"agreement {agreement} not above 0.75", kind="filtered"))
            continue
        gold = GoldLabel.WRONG if judgment in _WRONG_JUDGMENTS else GoldLabel.NOT_WRONG
        cases.append(
            TestCase(
                id=f"{dataset}:{row_index}",
                dataset=dataset,
                shape=TaskShape.SINGLE_SCENARIO,
                scenario=scenario,
                gold=gold,
                meta={
                    "row": str(row_index),
                    "category": category,
                    "agreement": str(agreement),
                    "judgment": str(judgment),
                },
            )
        )
    return LoadResult(cases, skipped)


def sample(cases: list[TestCase], n: int, seed: int) -> list[TestCase]:
    """Uniform sample without replacement, preserving original relative order.

    The selection is a partial Fisher-Yates shuffle driven only by the seed,
    so results are stable for a fixed (case order, n, seed) triple.
    """
    if n < 0:
        raise SampleSizeError(n, len(cases))
    if n > len(cases):
        raise SampleSizeError(n, len(cases))
    rng = random.Random(seed)
    order = list(range(len(cases)))
    for i in range(n):
        j = rng.randrange(i, len(order))
        order[i], order[j] = order[j], order[i]
    picked = sorted(order[:n])
    return [cases[i] for i in picked]


def write_cases_jsonl(cases: Iterable[TestCase], path: str | Path) -> int:
    """Write cases in the canonical JSONL form; returns the number written."""
    count = 0
    with Path(path).open("w", encoding="utf-8") as f:
        for case in cases:
            f.write(json.dumps(case.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_cases_jsonl(path: str | Path) -> list[TestCase]:
    cases = []
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                cases.append(TestCase.from_dict(json.loads(line)))
    return cases
