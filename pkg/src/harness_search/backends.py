"""Uniform access to the frozen base model: HTTP, mock, and replay backends.

All token accounting flows through here. The default estimator is
ceil(utf8_bytes / 4); it is pluggable per run and its name is recorded in
the run manifest so reports are self-describing.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .errors import BackendUnavailable, MockMiss, ReplayMiss
from .store import Run, TraceEvent, utc_now

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


# --- token accounting -----------------------------------------------------


def count_tokens(text: str) -> int:
    """Default estimator: ceil(utf8 byte length / 4)."""
    return (len(text.encode("utf-8")) + 3) // 4


ESTIMATORS: Dict[str, Callable[[str], int]] = {"bytes_div_4": count_tokens}


def register_estimator(name: str, fn: Callable[[str], int]) -> None:
    ESTIMATORS[name] = fn


def get_estimator(name: str) -> Callable[[str], int]:
    return ESTIMATORS[name]


# --- request / response types ----------------------------------------------


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")


@dataclass(frozen=True)
class LlmRequest:
    messages: Tuple[ChatMessage, ...]
    max_output_tokens: int = 512
    temperature: float = 0.0
    sample_index: int = 0

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.messages[-1].role not in ("user", "system"):
            raise ValueError("last message must have role user or system")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")

    def final_user_content(self) -> str:
        for msg in reversed(self.messages):
            if msg.role == "user":
                return msg.content
        return self.messages[-1].content


@dataclass(frozen=True)
class LlmResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int
    backend_id: str


def render_messages(messages: Sequence[ChatMessage]) -> str:
    """Canonical flat rendering of a message list, used for trace payloads
    and for token/char accounting of prompts."""
    return "\n".join(f"{m.role}: {m.content}" for m in messages)


# --- configuration ----------------------------------------------------------


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_ms: int = 100


@dataclass
class MockRule:
    pattern: str
    output: str
    # When set, the rule only applies to requests with this sample index.
    sample_index: Optional[int] = None


@dataclass
class BackendConfig:
    kind: str  # http | mock | replay
    endpoint_url: Optional[str] = None
    model_name: Optional[str] = None
    api_key_env_var: Optional[str] = None
    rule_table: List[MockRule] = field(default_factory=list)
    default_output: Optional[str] = None
    replay_source: Optional[dict] = None  # {"run": path, "candidate": id}
    max_parallel: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout_s: float = 60.0
    token_estimator: str = "bytes_div_4"

    def validate(self) -> None:
        if self.kind == "http":
            if not self.endpoint_url or not self.model_name:
                raise ValueError("http backend requires endpoint_url and model_name")
        elif self.kind == "mock":
            pass
        elif self.kind == "replay":
            if not self.replay_source:
                raise ValueError("replay backend requires replay_source")
        else:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")


# --- backends ----------------------------------------------------------------


class Backend:
    backend_id = "base"

    def complete(self, request: LlmRequest) -> LlmResponse:
        raise NotImplementedError

    def bind_context(self, dataset_id: str, example_id: str) -> None:
        """Hook for stream-scoped backends; no-op by default."""


class MockBackend(Backend):
    """Deterministic backend: first rule whose pattern is a substring of the
    final user message wins, optionally filtered by sample index."""

    backend_id = "mock"

    def __init__(
        self,
        rules: Sequence[MockRule] = (),
        default_output: Optional[str] = None,
        estimator: Callable[[str], int] = count_tokens,
    ):
        self.rules = list(rules)
        self.default_output = default_output
        self.estimator = estimator
        self.call_log: List[LlmRequest] = []

    def complete(self, request: LlmRequest) -> LlmResponse:
        self.call_log.append(request)
        target = request.final_user_content()
        output = None
        for rule in self.rules:
            if rule.sample_index is not None and rule.sample_index != request.sample_index:
                continue
            if rule.pattern in target:
                output = rule.output
                break
        if output is None:
            output = self.default_output
        if output is None:
            raise MockMiss(f"no rule matched and no default output (prompt tail: {target[-80:]!r})")
        return LlmResponse(
            content=output,
            prompt_tokens=self.estimator(render_messages(request.messages)),
            completion_tokens=self.estimator(output),
            backend_id=self.backend_id,
        )


class ReplayBackend(Backend):
    """Serves the model outputs previously logged for the same example, in
    call order. Stateful: one evaluation stream at a time."""

    backend_id = "replay"

    def __init__(self, source_run: Run, candidate_id: str, estimator: Callable[[str], int] = count_tokens):
        self.source_run = source_run
        self.candidate_id = candidate_id
        self.estimator = estimator
        self._key: Optional[Tuple[str, str]] = None
        self._outputs: List[TraceEvent] = []
        self._cursor = 0

    def bind_context(self, dataset_id: str, example_id: str) -> None:
        key = (dataset_id, example_id)
        if key == self._key:
            return
        events = self.source_run.read_trace(self.candidate_id, dataset_id, example_id)
        self._outputs = [e for e in events if e.kind == "model_output"]
        self._cursor = 0
        self._key = key

    def complete(self, request: LlmRequest) -> LlmResponse:
        if self._key is None:
            raise ReplayMiss("replay backend has no bound example context")
        if self._cursor >= len(self._outputs):
            raise ReplayMiss(
                f"no logged response for call {self._cursor} of "
                f"{self._key[0]}/{self._key[1]} ({len(self._outputs)} recorded)"
            )
        event = self._outputs[self._cursor]
        self._cursor += 1
        return LlmResponse(
            content=event.payload,
            prompt_tokens=self.estimator(render_messages(request.messages)),
            completion_tokens=event.token_count if event.token_count is not None else self.estimator(event.payload),
            backend_id=self.backend_id,
        )


# transport: (url, body, headers, timeout_s) -> (status_code, parsed body)
Transport = Callable[[str, dict, Dict[str, str], float], Tuple[int, dict]]


def _httpx_transport(url: str, body: dict, headers: Dict[str, str], timeout_s: float) -> Tuple[int, dict]:
    import httpx

    response = httpx.post(url, json=body, headers=headers, timeout=timeout_s)
    try:
        parsed = response.json()
    except (json.JSONDecodeError, ValueError):
        parsed = {}
    return response.status_code, parsed


class HttpBackend(Backend):
    """Chat-completions over HTTP: POST <endpoint>/chat/completions with
    retries (exponential backoff + jitter) on transport errors and 429/5xx."""

    backend_id = "http"

    def __init__(
        self,
        config: BackendConfig,
        transport: Optional[Transport] = None,
        estimator: Callable[[str], int] = count_tokens,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        config.validate()
        self.config = config
        self.transport = transport or _httpx_transport
        self.estimator = estimator
        self.sleeper = sleeper
        self._slots = threading.Semaphore(config.max_parallel)

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env_var:
            key = os.environ.get(self.config.api_key_env_var, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, request: LlmRequest) -> LlmResponse:
        url = self.config.endpoint_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self.config.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        attempts = max(1, self.config.retry.max_attempts)
        last_error = "no attempt made"
        for attempt in range(attempts):
            try:
                with self._slots:
                    status, doc = self.transport(url, body, self._headers(), self.config.timeout_s)
            except Exception as exc:  # transport-level failure is retryable
                last_error = f"transport error: {exc}"
            else:
                if status == 200:
                    return self._parse(request, doc)
                last_error = f"HTTP {status}"
                if status != 429 and 400 <= status < 500:
                    raise BackendUnavailable(f"non-retryable {last_error}")
            if attempt + 1 < attempts:
                backoff = self.config.retry.base_backoff_ms / 1000.0 * (2**attempt)
                self.sleeper(backoff * random.uniform(0.5, 1.5))
        raise BackendUnavailable(f"gave up after {attempts} attempts: {last_error}")

    def _parse(self, request: LlmRequest, doc: dict) -> LlmResponse:
        try:
            content = doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed completion body: {exc}") from exc
        usage = doc.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if prompt_tokens is None:
            prompt_tokens = self.estimator(render_messages(request.messages))
        if completion_tokens is None:
            completion_tokens = self.estimator(content)
        return LlmResponse(
            content=content,
            prompt_tokens=int(prompt_tokens),
            completion_tokens=int(completion_tokens),
            backend_id=self.backend_id,
        )


def make_backend(config: BackendConfig, transport: Optional[Transport] = None) -> Backend:
    config.validate()
    estimator = get_estimator(config.token_estimator)
    if config.kind == "mock":
        return MockBackend(config.rule_table, config.default_output, estimator)
    if config.kind == "replay":
        from .store import load_run

        source = config.replay_source
        return ReplayBackend(load_run(source["run"]), source["candidate"], estimator)
    return HttpBackend(config, transport=transport, estimator=estimator)


# --- trace recording ----------------------------------------------------------


def record_response(
    run: Run,
    candidate_id: str,
    dataset_id: str,
    example_id: str,
    request: LlmRequest,
    response: LlmResponse,
    estimator: Callable[[str], int] = count_tokens,
) -> None:
    """Append one prompt event and one model_output event for a completed call."""
    prompt_payload = render_messages(request.messages)
    next_seq = run.next_trace_seq(candidate_id, dataset_id, example_id)
    run.append_trace(
        candidate_id,
        dataset_id,
        example_id,
        TraceEvent(
            seq=next_seq,
            kind="prompt",
            payload=prompt_payload,
            token_count=estimator(prompt_payload),
            timestamp=utc_now(),
        ),
    )
    run.append_trace(
        candidate_id,
        dataset_id,
        example_id,
        TraceEvent(
            seq=next_seq + 1,
            kind="model_output",
            payload=response.content,
            token_count=response.completion_tokens,
            timestamp=utc_now(),
        ),
    )
