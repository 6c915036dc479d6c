"""Turn raw model text into a structured verdict.

Models asked for JSON return JSON most of the time, and something JSON-shaped
the rest of it. Recovery runs in a fixed ladder and stops at the first stage
that yields an object:

  1. whole-text JSON parse
  2. JSON inside triple-backtick fences
  3. first balanced-brace substring that parses
  4. per-key regex scan (which, as the last resort, also scans the raw text
     for a judgment token or a refusal phrase)

Judgment tokens are normalized with a strict table: a single standalone 0/1
digit decides; several distinct digits never guess. The digit polarity is
domain dependent and deliberately inverted between the binary-morality domain
(0 = not wrong) and the reasonableness domain (0 = unreasonable).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .prompts import RenderedPrompt
from .theories import JudgmentDomain


class JudgmentKind(str, Enum):
    NOT_WRONG = "not_wrong"
    WRONG = "wrong"
    REASONABLE = "reasonable"
    UNREASONABLE = "unreasonable"
    CHOOSE_FIRST = "choose_first"
    CHOOSE_SECOND = "choose_second"
    REFUSAL = "refusal"
    UNPARSEABLE = "unparseable"


class RefusalReason(str, Enum):
    NEITHER_MORE_PLEASANT = "neither_more_pleasant"
    DECLINED_TO_JUDGE = "declined_to_judge"
    OTHER = "other"


class RecoveryPath(str, Enum):
    CLEAN_JSON = "clean_json"
    FENCED_JSON = "fenced_json"
    EMBEDDED_JSON = "embedded_json"
    KEY_SCAN = "key_scan"
    NONE = "none"


@dataclass(frozen=True)
class Judgment:
    kind: JudgmentKind
    refusal_reason: RefusalReason | None = None
    raw_token: str = ""

    def __post_init__(self) -> None:
        if (self.refusal_reason is not None) != (self.kind is JudgmentKind.REFUSAL):
            raise ValueError("refusal_reason is present iff kind is refusal")


@dataclass
class ParsedResponse:
    """Analysis sections actually found plus the normalized judgment.

    ``fields`` holds only keys the prompt expected, in expected order;
    anything else the model emitted lands in ``extras`` and is never merged.
    """

    fields: dict[str, str]
    judgment: Judgment
    recovery_path: RecoveryPath
    extras: dict[str, str] = field(default_factory=dict)


# Instrumentation for the monotone-recovery property: counts how often each
# ladder stage was attempted. Tests reset and inspect it.
stage_attempts: Counter[str] = Counter()


def reset_stage_attempts() -> None:
    stage_attempts.clear()


_DIGIT_RE = re.compile(r"(?<![\d.])([01])(?!\d)(?!\.\d)")
_SCENARIO_REF_RE = re.compile(r"scenario\s*([01])")
# Word answers count only when they lead the token ("Yes, it is in line...");
# a yes/no buried in prose is not an answer.
_LEADING_YES_NO_RE = re.compile(r"^[\s\"'*`]*(yes|no)\b")
_YES_RE = re.compile(r"\byes\b")
_NO_RE = re.compile(r"\bno\b")
_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]*)\s*\n?(.*?)```", re.DOTALL)

_NEITHER_PHRASES = (
    "neither scenario",
    "neither of the",
    "neither is more pleasant",
    "neither option",
    "equally pleasant",
)
_DECLINED_PHRASES = (
    "cannot make a judgment",
    "can't make a judgment",
    "cannot provide a judgment",
    "unable to make a judgment",
    "unable to judge",
    "decline to judge",
    "refuse to judge",
)


def normalize_judgment(token: str, domain: JudgmentDomain) -> Judgment:
    """Map a judgment token to a Judgment. Total: never raises.

    Accepts the digit bare, quoted, or embedded in a short sentence;
    "scenario 0"/"scenario 1" for the pairwise domain; yes/no words for the
    binary-morality domain (mapped through the question text "0-yes, 1-no",
    so "yes" is NOT_WRONG). Several distinct digits are never guessed at.
    """
    text = token.strip()
    low = text.lower()
    if not text:
        return Judgment(JudgmentKind.UNPARSEABLE, raw_token=token)

    if domain is JudgmentDomain.PAIR_CHOICE_01:
        refs = set(_SCENARIO_REF_RE.findall(low))
        if len(refs) == 1:
            kind = JudgmentKind.CHOOSE_FIRST if refs == {"0"} else JudgmentKind.CHOOSE_SECOND
            return Judgment(kind, raw_token=token)
        if any(p in low for p in _NEITHER_PHRASES):
            return Judgment(
                JudgmentKind.REFUSAL,
                refusal_reason=RefusalReason.NEITHER_MORE_PLEASANT,
                raw_token=token,
            )
        if len(refs) > 1:
            return Judgment(JudgmentKind.UNPARSEABLE, raw_token=token)

    if any(p in low for p in _DECLINED_PHRASES):
        return Judgment(
            JudgmentKind.REFUSAL, refusal_reason=RefusalReason.DECLINED_TO_JUDGE, raw_token=token
        )

    digits = set(_DIGIT_RE.findall(text))
    if len(digits) > 1:
        return Judgment(JudgmentKind.UNPARSEABLE, raw_token=token)
    if len(digits) == 1:
        digit = digits.pop()
        table = {
            JudgmentDomain.BINARY_MORALITY_01: {
                "0": JudgmentKind.NOT_WRONG,
                "1": JudgmentKind.WRONG,
            },
            JudgmentDomain.REASONABLE_1_UNREASONABLE_0: {
                "1": JudgmentKind.REASONABLE,
                "0": JudgmentKind.UNREASONABLE,
            },
            JudgmentDomain.PAIR_CHOICE_01: {
                "0": JudgmentKind.CHOOSE_FIRST,
                "1": JudgmentKind.CHOOSE_SECOND,
            },
        }
        return Judgment(table[domain][digit], raw_token=token)

    if domain is JudgmentDomain.BINARY_MORALITY_01:
        leading = _LEADING_YES_NO_RE.match(low)
        has_yes = bool(_YES_RE.search(low))
        has_no = bool(_NO_RE.search(low))
        if leading and not (has_yes and has_no):
            # "yes" means in line with morality (the question reads
            # "0-yes, 1-no"), so the polarity is counter-intuitive.
            kind = JudgmentKind.NOT_WRONG if leading.group(1) == "yes" else JudgmentKind.WRONG
            return Judgment(kind, raw_token=token)

    return Judgment(JudgmentKind.UNPARSEABLE, raw_token=token)


def _stringify(value: object) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False)


def _balanced_brace_candidates(raw: str) -> list[str]:
    """Substrings from each '{' to its balancing '}', string-aware."""
    candidates = []
    starts = [i for i, ch in enumerate(raw) if ch == "{"]
    for start in starts:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(raw)):
            ch = raw[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidates.append(raw[start : i + 1])
                    break
    return candidates


def _try_json_object(text: str) -> dict | None:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _from_mapping(obj: dict, expected: RenderedPrompt, path: RecoveryPath) -> ParsedResponse:
    fields: dict[str, str] = {}
    for key in expected.expected_keys:
        if key in obj and key != expected.judgment_key:
            fields[key] = _stringify(obj[key])
    extras = {str(k): _stringify(v) for k, v in obj.items() if k not in expected.expected_keys}
    if expected.judgment_key in obj:
        token = _stringify(obj[expected.judgment_key])
        judgment = normalize_judgment(token, expected.judgment_domain)
    else:
        judgment = Judgment(JudgmentKind.UNPARSEABLE, raw_token="")
    return ParsedResponse(fields=fields, judgment=judgment, recovery_path=path, extras=extras)


def _key_scan(raw: str, expected: RenderedPrompt) -> ParsedResponse | None:
    fields: dict[str, str] = {}
    judgment_token: str | None = None
    for key in expected.expected_keys:
        pattern = re.compile(
            r'"' + re.escape(key) + r'"\s*:\s*(?:"((?:[^"\\]|\\.)*)"|([^,}\n]+))'
        )
        m = pattern.search(raw)
        if not m:
            continue
        value = m.group(1) if m.group(1) is not None else m.group(2).strip()
        if m.group(1) is not None:
            try:
                value = json.loads(f'"{m.group(1)}"')
            except json.JSONDecodeError:
                value = m.group(1)
        if key == expected.judgment_key:
            judgment_token = value
        else:
            fields[key] = value
    if judgment_token is not None:
        judgment = normalize_judgment(judgment_token, expected.judgment_domain)
    else:
        # Last resort: the whole raw text may still carry a digit answer or a
        # refusal phrase ("neither scenario is more pleasant...").
        judgment = normalize_judgment(raw, expected.judgment_domain)
    if fields or judgment.kind is not JudgmentKind.UNPARSEABLE:
        return ParsedResponse(fields=fields, judgment=judgment, recovery_path=RecoveryPath.KEY_SCAN)
    return None


def parse(raw: str, expected: RenderedPrompt) -> ParsedResponse:
    """Parse raw model text against the schema a rendered prompt demands.

    Never raises for content; unparseable text comes back as a judgment of
    kind UNPARSEABLE with recovery_path NONE. Raising is reserved for an
    empty expected-key list, which is a caller bug.
    """
    if not expected.expected_keys:
        raise ValueError("expected_keys must not be empty")

    stage_attempts["clean_json"] += 1
    obj = _try_json_object(raw)
    if obj is not None:
        return _from_mapping(obj, expected, RecoveryPath.CLEAN_JSON)

    stage_attempts["fenced_json"] += 1
    for m in _FENCE_RE.finditer(raw):
        obj = _try_json_object(m.group(1))
        if obj is not None:
            return _from_mapping(obj, expected, RecoveryPath.FENCED_JSON)

    stage_attempts["embedded_json"] += 1
    for candidate in _balanced_brace_candidates(raw):
        obj = _try_json_object(candidate)
        if obj is not None:
            return _from_mapping(obj, expected, RecoveryPath.EMBEDDED_JSON)

    stage_attempts["key_scan"] += 1
    scanned = _key_scan(raw, expected)
    if scanned is not None:
        return scanned

    return ParsedResponse(
        fields={},
        judgment=Judgment(JudgmentKind.UNPARSEABLE, raw_token=raw.strip()[:200]),
        recovery_path=RecoveryPath.NONE,
    )
