"""Uniform access to judgment backends.

Three interchangeable backends sit behind one blocking ``complete`` call:

* ``http_chat`` speaks the de-facto chat-completions wire shape over HTTP,
  with retries and exponential backoff on transient failures;
* ``replay`` serves recorded responses keyed by (prompt_hash, model) and
  performs zero network operations — a missing key is an error, never a
  live call;
* ``rule_mock`` derives a deterministic response from the prompt bytes alone,
  for tests and offline pipeline checks.

Every backend enforces its configured concurrency limit internally, so the
invariant holds no matter how many workers call in.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import httpx

from .prompts import RenderedPrompt


class BackendKind(str, Enum):
    HTTP_CHAT = "http_chat"
    REPLAY = "replay"
    RULE_MOCK = "rule_mock"


class ExchangeStatus(str, Enum):
    OK = "ok"
    BLOCKED = "blocked"
    TRANSPORT_ERROR = "transport_error"
    TIMEOUT = "timeout"


class GatewayConfigError(RuntimeError):
    pass


class ReplayMissError(LookupError):
    def __init__(self, prompt_hash: str, model: str) -> None:
        super().__init__(f"no recording for prompt_hash={prompt_hash} model={model}")
        self.prompt_hash = prompt_hash
        self.model = model


class ConflictingRecordingError(RuntimeError):
    def __init__(self, prompt_hash: str, model: str) -> None:
        super().__init__(
            f"conflicting recording for prompt_hash={prompt_hash} model={model}: "
            "refusing to overwrite an existing response with different bytes"
        )


@dataclass(frozen=True)
class BackendConfig:
    """Connection and client policy for one backend.

    The credential itself is never stored here: ``api_key_env`` names the
    environment variable that holds it.
    """

    kind: BackendKind
    model_name: str = "rule-mock"
    endpoint_url: str = ""
    api_key_env: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 30.0
    max_retries: int = 2
    backoff_initial: float = 0.5
    backoff_multiplier: float = 2.0
    concurrency_limit: int = 4
    replay_path: str | None = None
    system_message: str | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.kind is BackendKind.REPLAY and not self.replay_path:
            raise ValueError("replay backend requires replay_path")
        if self.kind is BackendKind.HTTP_CHAT and not self.endpoint_url:
            raise ValueError("http_chat backend requires endpoint_url")

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind.value,
            "model_name": self.model_name,
            "endpoint_url": self.endpoint_url,
            "api_key_env": self.api_key_env,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "backoff_initial": self.backoff_initial,
            "backoff_multiplier": self.backoff_multiplier,
            "concurrency_limit": self.concurrency_limit,
            "replay_path": self.replay_path,
            "system_message": self.system_message,
        }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BackendConfig":
        known = {
            "kind", "model_name", "endpoint_url", "api_key_env", "temperature",
            "max_tokens", "timeout", "max_retries", "backoff_initial",
            "backoff_multiplier", "concurrency_limit", "replay_path", "system_message",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown backend config keys: {sorted(unknown)}")
        d = dict(d)
        d["kind"] = BackendKind(d["kind"])
        return cls(**d)

    @property
    def digest(self) -> str:
        import hashlib

        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class Exchange:
    """One request/response round trip (or its failure)."""

    prompt_hash: str
    prompt_text: str
    raw_response: str
    status: ExchangeStatus
    model_name: str
    latency: float = 0.0
    attempt_count: int = 1
    diagnostic: str | None = None
    token_usage: tuple[int, int] | None = None
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def __post_init__(self) -> None:
        if self.status is ExchangeStatus.OK and not self.raw_response:
            raise ValueError("ok exchange requires a non-empty raw_response")
        if self.status is not ExchangeStatus.OK and not self.diagnostic:
            raise ValueError("failed exchange requires a diagnostic message")


class ReplayStore:
    """JSONL store of recorded responses keyed by (prompt_hash, model).

    Writes are serialized and idempotent: recording identical bytes twice is
    a no-op, recording different bytes for an existing key is an error.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], str] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    self._entries[(entry["prompt_hash"], entry["model"])] = entry["raw_response"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, prompt_hash: str, model: str) -> str:
        try:
            return self._entries[(prompt_hash, model)]
        except KeyError:
            raise ReplayMissError(prompt_hash, model) from None

    def by_hash(self) -> dict[str, str]:
        """Responses keyed by prompt hash alone (any model), for triage."""
        return {h: raw for (h, _model), raw in self._entries.items()}

    def record(self, exchange: Exchange) -> None:
        if exchange.status is not ExchangeStatus.OK:
            raise ValueError("only ok exchanges may be recorded")
        key = (exchange.prompt_hash, exchange.model_name)
        with self._lock:
            existing = self._entries.get(key)
            if existing is not None:
                if existing != exchange.raw_response:
                    raise ConflictingRecordingError(*key)
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as f:
                f.write(
                    json.dumps(
                        {
                            "prompt_hash": exchange.prompt_hash,
                            "model": exchange.model_name,
                            "raw_response": exchange.raw_response,
                            "recorded_at": exchange.timestamp,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                f.flush()
            self._entries[key] = exchange.raw_response


def record(exchange: Exchange, store: ReplayStore) -> None:
    """Idempotent upsert of an ok exchange into a replay store."""
    store.record(exchange)


# ---------------------------------------------------------------------------
# Rule mock
#
# The full rule table, pinned here and asserted by tests:
#   * GARBAGE_MARKER in any quoted input -> a non-JSON response (exercises
#     the unparseable path end to end)
#   * pairwise prompt with REFUSAL_MARKER in an input -> prose refusal
#     ("neither scenario is more pleasant than the other")
#   * pairwise prompt: answers the presented index of the scenario without a
#     WRONG_MARKER (ties, either way, answer "0"), so the choice tracks the
#     presentation order the way a model's would
#   * any other prompt: judgment "1" when a WRONG_MARKER token appears in any
#     quoted input segment, "0" otherwise
# The response echoes every scaffold key with filler analysis text, so it is
# well-formed against the prompt's expected schema.
# ---------------------------------------------------------------------------

WRONG_MARKERS = ("steal", "stole", "rob", "punch", "cheat", "poison", "lie to")
REFUSAL_MARKER = "cribbage"
GARBAGE_MARKER = "zzz-garbage"

_INPUT_LINE_RE = re.compile(r'^(?:Scenario(?: [01])?|Statement): "(.*)"\.$', re.MULTILINE)
_SCAFFOLD_KEY_RE = re.compile(r'^  "((?:[^"\\]|\\.)+)":', re.MULTILINE)


def _has_marker(text: str) -> bool:
    return any(marker in text.lower() for marker in WRONG_MARKERS)


def _mock_response_for(prompt_text: str) -> str:
    inputs = _INPUT_LINE_RE.findall(prompt_text)
    keys = _SCAFFOLD_KEY_RE.findall(prompt_text)
    joined = " ".join(inputs).lower()
    pairwise = "Which scenario is more pleasant" in prompt_text

    if GARBAGE_MARKER in joined:
        return "### no structure here, mock garbage response ###"
    if pairwise and REFUSAL_MARKER in joined:
        return "Considering both options, neither scenario is more pleasant than the other."

    if pairwise and len(inputs) == 2:
        first_bad, second_bad = _has_marker(inputs[0]), _has_marker(inputs[1])
        digit = "1" if first_bad and not second_bad else "0"
    else:
        digit = "1" if _has_marker(joined) else "0"
    payload = {key: f"mock analysis for {key}" for key in keys[:-1]}
    payload[keys[-1]] = digit
    return json.dumps(payload, ensure_ascii=False)


class _BackendBase:
    def __init__(self, cfg: BackendConfig) -> None:
        self.cfg = cfg
        self._sem = threading.BoundedSemaphore(cfg.concurrency_limit)

    def complete(self, prompt: RenderedPrompt) -> Exchange:
        with self._sem:
            return self._complete(prompt)

    def _complete(self, prompt: RenderedPrompt) -> Exchange:  # pragma: no cover
        raise NotImplementedError


class RuleMockBackend(_BackendBase):
    def _complete(self, prompt: RenderedPrompt) -> Exchange:
        return Exchange(
            prompt_hash=prompt.prompt_hash,
            prompt_text=prompt.text,
            raw_response=_mock_response_for(prompt.text),
            status=ExchangeStatus.OK,
            model_name=self.cfg.model_name,
            latency=0.0,
        )


class ReplayBackend(_BackendBase):
    def __init__(self, cfg: BackendConfig) -> None:
        super().__init__(cfg)
        assert cfg.replay_path is not None
        self.store = ReplayStore(cfg.replay_path)

    def _complete(self, prompt: RenderedPrompt) -> Exchange:
        raw = self.store.get(prompt.prompt_hash, self.cfg.model_name)
        return Exchange(
            prompt_hash=prompt.prompt_hash,
            prompt_text=prompt.text,
            raw_response=raw,
            status=ExchangeStatus.OK,
            model_name=self.cfg.model_name,
            latency=0.0,
        )


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}
_BLOCKED_CODES = {"content_filter", "content_policy_violation"}


class HttpChatBackend(_BackendBase):
    """Chat-completions client: one user-role message per prompt."""

    def __init__(self, cfg: BackendConfig, transport: httpx.BaseTransport | None = None) -> None:
        super().__init__(cfg)
        if cfg.api_key_env and cfg.api_key_env not in os.environ:
            raise GatewayConfigError(
                f"credential environment variable {cfg.api_key_env} is not set"
            )
        headers = {}
        if cfg.api_key_env:
            headers["Authorization"] = f"Bearer {os.environ[cfg.api_key_env]}"
        self._client = httpx.Client(
            headers=headers, timeout=cfg.timeout, transport=transport
        )

    def _payload(self, prompt: RenderedPrompt) -> dict:
        messages = []
        if self.cfg.system_message:
            messages.append({"role": "system", "content": self.cfg.system_message})
        messages.append({"role": "user", "content": prompt.text})
        return {
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        }

    def _complete(self, prompt: RenderedPrompt) -> Exchange:
        cfg = self.cfg
        start = time.perf_counter()
        delay = cfg.backoff_initial
        attempts = 0
        status = ExchangeStatus.TRANSPORT_ERROR
        diagnostic = "no attempt made"
        while attempts <= cfg.max_retries:
            attempts += 1
            retryable = False
            try:
                resp = self._client.post(cfg.endpoint_url, json=self._payload(prompt))
            except httpx.TimeoutException as exc:
                status, diagnostic, retryable = ExchangeStatus.TIMEOUT, str(exc), True
            except httpx.HTTPError as exc:
                status, diagnostic, retryable = ExchangeStatus.TRANSPORT_ERROR, str(exc), True
            else:
                outcome = self._interpret(resp, prompt, start, attempts)
                if isinstance(outcome, Exchange):
                    return outcome
                status, diagnostic, retryable = outcome
            if not retryable or attempts > cfg.max_retries:
                break
            time.sleep(delay * (1.0 + 0.1 * random.random()))
            delay *= cfg.backoff_multiplier
        return Exchange(
            prompt_hash=prompt.prompt_hash,
            prompt_text=prompt.text,
            raw_response="",
            status=status,
            model_name=cfg.model_name,
            latency=time.perf_counter() - start,
            attempt_count=attempts,
            diagnostic=diagnostic,
        )

    def _interpret(
        self, resp: httpx.Response, prompt: RenderedPrompt, start: float, attempts: int
    ) -> Exchange | tuple[ExchangeStatus, str, bool]:
        """Return a finished Exchange, or (status, diagnostic, retryable)."""
        if resp.status_code == 200:
            try:
                body = resp.json()
                choice = body["choices"][0]
                content = choice["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                return ExchangeStatus.TRANSPORT_ERROR, f"malformed response body: {exc}", False
            if choice.get("finish_reason") == "content_filter":
                return ExchangeStatus.BLOCKED, "endpoint signalled content filtering", False
            usage = body.get("usage") or {}
            token_usage = None
            if "prompt_tokens" in usage and "completion_tokens" in usage:
                token_usage = (int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
            return Exchange(
                prompt_hash=prompt.prompt_hash,
                prompt_text=prompt.text,
                raw_response=content,
                status=ExchangeStatus.OK,
                model_name=self.cfg.model_name,
                latency=time.perf_counter() - start,
                attempt_count=attempts,
                token_usage=token_usage,
            )
        if resp.status_code in _RETRYABLE_STATUS:
            return ExchangeStatus.TRANSPORT_ERROR, f"HTTP {resp.status_code}", True
        try:
            code = (resp.json().get("error") or {}).get("code", "")
        except json.JSONDecodeError:
            code = ""
        if code in _BLOCKED_CODES:
            return ExchangeStatus.BLOCKED, f"endpoint blocked the request ({code})", False
        return ExchangeStatus.TRANSPORT_ERROR, f"HTTP {resp.status_code}", False


def build_backend(
    cfg: BackendConfig, transport: httpx.BaseTransport | None = None
) -> _BackendBase:
    if cfg.kind is BackendKind.RULE_MOCK:
        return RuleMockBackend(cfg)
    if cfg.kind is BackendKind.REPLAY:
        return ReplayBackend(cfg)
    return HttpChatBackend(cfg, transport=transport)


def complete(prompt: RenderedPrompt, cfg: BackendConfig) -> Exchange:
    """One-shot convenience wrapper; batch callers should build a backend once."""
    return build_backend(cfg).complete(prompt)
