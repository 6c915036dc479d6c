"""Deterministic prompt assembly.

A rendered prompt is three parts in fixed order: the input block (scenario
lines), the chain-of-thought preamble, and a JSON scaffold listing the
analysis fields followed by the judgment question. Scenario text is inserted
only inside double-quoted string positions and is JSON-escaped there, so a
scenario containing quotes cannot unbalance the scaffold.

Whitespace policy (the golden files in tests/golden are the source of truth):
one line per scenario, the preamble on its own line, the opening brace on its
own line, each JSON field on its own line indented two spaces, closing brace
on its own line, no trailing newline.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .datasets import TestCase
from .theories import (
    JudgmentDomain,
    TaskShape,
    Theory,
    Wording,
    get_template,
)

JUDGMENT_NOTE = {
    Wording.DEFAULT: "[Answer this question with number only]",
    Wording.ALTERNATE: "[Answer this question with a number only]",
}

# Choice alphabets swapped by the choice-order prompt variation.
_BINARY_CHOICES = ("0-yes, 1-no", "1-no, 0-yes")
_EXEMPTION_CHOICES = (
    "1 (reasonable) or 0 (unreasonable)",
    "0 (unreasonable) or 1 (reasonable)",
)


class BracketStyle(str, Enum):
    PARENTHESES = "parentheses"
    SQUARE_BRACKETS = "square_brackets"


class ShapeMismatchError(ValueError):
    """A case's fields do not match the shape it claims."""


@dataclass(frozen=True)
class PromptVariant:
    choice_order_swapped: bool = False
    bracket_style: BracketStyle = BracketStyle.PARENTHESES
    wording: Wording = Wording.DEFAULT

    @property
    def is_default(self) -> bool:
        return self == PromptVariant()

    @property
    def slug_suffix(self) -> str:
        parts = []
        if self.choice_order_swapped:
            parts.append("swapped")
        if self.bracket_style is BracketStyle.SQUARE_BRACKETS:
            parts.append("brackets")
        if self.wording is Wording.ALTERNATE:
            parts.append("altwording")
        return "".join(f"+{p}" for p in parts)


@dataclass(frozen=True)
class Method:
    """A judgment method: a theory plus the prompt variant it is rendered under."""

    theory: Theory
    variant: PromptVariant = field(default_factory=PromptVariant)

    @property
    def slug(self) -> str:
        return self.theory.slug + self.variant.slug_suffix


@dataclass(frozen=True)
class RenderedPrompt:
    """The exact text sent to a backend plus the response schema expected back.

    ``choice_remap`` maps an answer index (0/1 as written by the model) to the
    dataset scenario index it denotes; it differs from identity only when the
    pairwise presentation order was swapped.
    """

    text: str
    expected_keys: tuple[str, ...]
    judgment_key: str
    judgment_domain: JudgmentDomain
    prompt_hash: str
    choice_remap: tuple[int, int] = (0, 1)


def _json_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _swap_choices(question: str) -> str:
    question = question.replace(_BINARY_CHOICES[0], _BINARY_CHOICES[1])
    question = question.replace(_EXEMPTION_CHOICES[0], _EXEMPTION_CHOICES[1])
    return question


def _swap_brackets(text: str) -> str:
    return text.replace("(", "[").replace(")", "]")


def _check_case_shape(case: TestCase) -> None:
    if case.shape is TaskShape.PAIRWISE_COMPARISON and not case.scenario_b:
        raise ShapeMismatchError(f"case {case.id}: pairwise shape without a second scenario")
    if case.shape is not TaskShape.PAIRWISE_COMPARISON and case.scenario_b:
        raise ShapeMismatchError(f"case {case.id}: second scenario on a non-pairwise shape")
    if case.shape is TaskShape.EXEMPTION_OR_ROLE and not case.statement:
        raise ShapeMismatchError(f"case {case.id}: exemption/role shape without a statement")
    if case.shape is not TaskShape.EXEMPTION_OR_ROLE and case.statement:
        raise ShapeMismatchError(f"case {case.id}: statement on a non-exemption shape")


def render(case: TestCase, method: Method) -> RenderedPrompt:
    """Assemble the full prompt for a (case, method) pair.

    Pure function: equal inputs give byte-equal text and equal hash.
    """
    _check_case_shape(case)
    variant = method.variant
    template = get_template(method.theory, case.shape, variant.wording)

    choice_remap = (0, 1)
    input_lines: list[str] = []
    if case.shape is TaskShape.SINGLE_SCENARIO:
        input_lines.append(f'Scenario: "{_json_escape(case.scenario)}".')
    elif case.shape is TaskShape.EXEMPTION_OR_ROLE:
        input_lines.append(f'Scenario: "{_json_escape(case.scenario)}".')
        input_lines.append(f'Statement: "{_json_escape(case.statement or "")}".')
    else:
        first, second = case.scenario, case.scenario_b or ""
        if variant.choice_order_swapped:
            first, second = second, first
            choice_remap = (1, 0)
        input_lines.append(f'Scenario 0: "{_json_escape(first)}".')
        input_lines.append(f'Scenario 1: "{_json_escape(second)}".')

    question = template.judgment_question
    if variant.choice_order_swapped:
        question = _swap_choices(question)
    note = JUDGMENT_NOTE[variant.wording]

    def decorate(text: str) -> str:
        if variant.bracket_style is BracketStyle.SQUARE_BRACKETS:
            return _swap_brackets(text)
        return text

    lines = list(input_lines)
    lines.append(template.preamble)
    lines.append("{")
    for f in template.analysis_fields:
        lines.append(f'  "{f.json_key}": "{f.format_note} {decorate(f.instruction)}",')
    lines.append(f'  "{template.judgment_key}": "{note} {decorate(question)}"')
    lines.append("}")
    text = "\n".join(lines)

    expected_keys = tuple(f.json_key for f in template.analysis_fields) + (template.judgment_key,)
    return RenderedPrompt(
        text=text,
        expected_keys=expected_keys,
        judgment_key=template.judgment_key,
        judgment_domain=template.judgment_domain,
        prompt_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        choice_remap=choice_remap,
    )


def render_variant_suite(case: TestCase, theory: Theory) -> list[RenderedPrompt]:
    """The three prompts of the robustness experiment: default, choice-order
    swapped, bracket-style swapped."""
    return [
        render(case, Method(theory, PromptVariant())),
        render(case, Method(theory, PromptVariant(choice_order_swapped=True))),
        render(case, Method(theory, PromptVariant(bracket_style=BracketStyle.SQUARE_BRACKETS))),
    ]


def method_from_slug(slug: str) -> Method:
    """Parse a method slug as printed by Method.slug (theory plus +suffixes)."""
    from .theories import theory_from_slug

    parts = slug.split("+")
    theory = theory_from_slug(parts[0])
    swapped = "swapped" in parts[1:]
    brackets = "brackets" in parts[1:]
    alt = "altwording" in parts[1:]
    unknown = set(parts[1:]) - {"swapped", "brackets", "altwording"}
    if unknown:
        raise ValueError(f"unknown method variant suffixes: {sorted(unknown)}")
    return Method(
        theory,
        PromptVariant(
            choice_order_swapped=swapped,
            bracket_style=BracketStyle.SQUARE_BRACKETS if brackets else BracketStyle.PARENTHESES,
            wording=Wording.ALTERNATE if alt else Wording.DEFAULT,
        ),
    )
