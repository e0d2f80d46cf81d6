"""The harness abstraction: a stateful program wrapping the base model.

Harnesses come in two flavors behind one handle interface:

  * native: a Python object implementing the `Harness` methods, run
    in-process (the shipped reference harnesses);
  * subprocess: any executable speaking the line-delimited JSON protocol
    over stdin/stdout, so harnesses can be written in any language.

The orchestrator mediates every model call: harness code never talks to
the network, which centralizes token accounting and makes replay possible.
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .backends import (
    Backend,
    ChatMessage,
    LlmRequest,
    LlmResponse,
    count_tokens,
    record_response,
    render_messages,
)
from .errors import EmptyCandidate, HarnessProtocolError
from .store import CandidateRecord, Run, TraceEvent, utc_now

logger = logging.getLogger(__name__)

TASK_ONLINE_CLASSIFICATION = "online_classification"
TASK_QA = "qa"
TASK_KINDS = (TASK_ONLINE_CLASSIFICATION, TASK_QA)

STATE_CREATED = "created"
STATE_INITIALIZED = "initialized"
STATE_SHUT_DOWN = "shut_down"

DEFAULT_INTERPRETER = "python3"
DEFAULT_IO_TIMEOUT_S = 60.0


# --- task and exchange types -------------------------------------------------


@dataclass
class TaskConfig:
    task_kind: str
    dataset_id: str
    label_set: Optional[List[str]] = None
    instruction: str = ""

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"task_kind must be one of {TASK_KINDS}")
        if self.task_kind == TASK_ONLINE_CLASSIFICATION and not self.label_set:
            raise ValueError("online_classification requires a non-empty label_set")

    def to_json(self) -> dict:
        return {
            "task_kind": self.task_kind,
            "dataset_id": self.dataset_id,
            "label_set": self.label_set,
            "instruction": self.instruction,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TaskConfig":
        return cls(
            task_kind=doc["task_kind"],
            dataset_id=doc["dataset_id"],
            label_set=doc.get("label_set"),
            instruction=doc.get("instruction", ""),
        )


@dataclass
class Example:
    example_id: str
    input_text: str
    label: Optional[str] = None

    def to_json(self) -> dict:
        return {"example_id": self.example_id, "input_text": self.input_text, "label": self.label}

    @classmethod
    def from_json(cls, doc: dict) -> "Example":
        return cls(doc["example_id"], doc["input_text"], doc.get("label"))


@dataclass
class Prediction:
    example_id: str
    label: str
    aux: Optional[dict] = None

    def __post_init__(self):
        if not self.label:
            raise ValueError("prediction label must be non-empty")


class Harness:
    """Base class for in-process harnesses."""

    def on_init(self, config: TaskConfig) -> None:
        raise NotImplementedError

    def on_learn(self, example: Example) -> Optional[str]:
        """Absorb one labeled example; return a state summary for the trace."""
        raise NotImplementedError

    def on_predict(self, query: Example, llm: "LlmClient") -> Prediction:
        raise NotImplementedError

    def on_shutdown(self) -> None:
        pass


# --- orchestrator-side LLM mediation -------------------------------------------


class LlmClient:
    """Per-prediction client handed to harnesses. Every call is served by
    the backend and logged as a (prompt, model_output) trace pair."""

    def __init__(
        self,
        backend: Backend,
        run: Optional[Run] = None,
        candidate_id: str = "",
        dataset_id: str = "",
        example_id: str = "",
        sample_index: int = 0,
        estimator: Callable[[str], int] = count_tokens,
    ):
        self.backend = backend
        self.run = run
        self.candidate_id = candidate_id
        self.dataset_id = dataset_id
        self.example_id = example_id
        self.sample_index = sample_index
        self.estimator = estimator
        self.call_count = 0
        self.prompt_tokens_total = 0
        self.prompt_chars_total = 0

    def complete(
        self,
        messages: Sequence[Union[ChatMessage, dict]],
        max_output_tokens: int = 512,
        temperature: float = 0.0,
    ) -> LlmResponse:
        msgs = tuple(
            m if isinstance(m, ChatMessage) else ChatMessage(m["role"], m["content"])
            for m in messages
        )
        request = LlmRequest(
            messages=msgs,
            max_output_tokens=max_output_tokens,
            temperature=temperature,
            sample_index=self.sample_index,
        )
        self.backend.bind_context(self.dataset_id, self.example_id)
        response = self.backend.complete(request)
        if self.run is not None:
            record_response(
                self.run,
                self.candidate_id,
                self.dataset_id,
                self.example_id,
                request,
                response,
                self.estimator,
            )
        self.call_count += 1
        self.prompt_tokens_total += response.prompt_tokens
        self.prompt_chars_total += len(render_messages(msgs))
        return response


# --- handles ----------------------------------------------------------------------


class HarnessHandle:
    """Lifecycle: init -> (learn | predict)* -> shutdown. Strictly
    sequential; one in-flight operation, single owner."""

    def __init__(self, candidate_id: str, run: Optional[Run], dataset_id: str):
        self.candidate_id = candidate_id
        self.run = run
        self.dataset_id = dataset_id
        self.state = STATE_CREATED
        self.llm_call_count = 0

    def _require_state(self, expected: str, op: str) -> None:
        if self.state != expected:
            raise HarnessProtocolError(
                f"{op} called in lifecycle state {self.state!r} (expected {expected!r})"
            )

    def _log_state_update(self, example_id: str, payload: str) -> None:
        if self.run is None:
            return
        seq = self.run.next_trace_seq(self.candidate_id, self.dataset_id, example_id)
        self.run.append_trace(
            self.candidate_id,
            self.dataset_id,
            example_id,
            TraceEvent(seq=seq, kind="state_update", payload=payload, timestamp=utc_now()),
        )

    def init(self, config: TaskConfig) -> None:
        raise NotImplementedError

    def learn(self, example: Example) -> None:
        raise NotImplementedError

    def predict(self, query: Example, llm: LlmClient) -> Prediction:
        raise NotImplementedError

    def shutdown(self) -> None:
        raise NotImplementedError


class NativeHandle(HarnessHandle):
    def __init__(self, candidate_id: str, harness: Harness, run: Optional[Run], dataset_id: str):
        super().__init__(candidate_id, run, dataset_id)
        self.harness = harness

    def init(self, config: TaskConfig) -> None:
        self._require_state(STATE_CREATED, "init")
        self.harness.on_init(config)
        self.state = STATE_INITIALIZED

    def learn(self, example: Example) -> None:
        self._require_state(STATE_INITIALIZED, "learn")
        if example.label is None:
            raise HarnessProtocolError("learn requires a labeled example")
        summary = self.harness.on_learn(example)
        if summary is not None:
            self._log_state_update(example.example_id, summary)

    def predict(self, query: Example, llm: LlmClient) -> Prediction:
        self._require_state(STATE_INITIALIZED, "predict")
        prediction = self.harness.on_predict(query, llm)
        if prediction.example_id != query.example_id:
            raise HarnessProtocolError(
                f"prediction for {prediction.example_id!r}, expected {query.example_id!r}"
            )
        self.llm_call_count += llm.call_count
        return prediction

    def shutdown(self) -> None:
        if self.state != STATE_SHUT_DOWN:
            self.harness.on_shutdown()
            self.state = STATE_SHUT_DOWN


class _LineReader(threading.Thread):
    """Drains a subprocess stdout into a queue so reads can time out."""

    _EOF = object()

    def __init__(self, stream):
        super().__init__(daemon=True)
        self.stream = stream
        self.lines: "queue.Queue" = queue.Queue()
        self.start()

    def run(self):
        try:
            for line in self.stream:
                self.lines.put(line)
        except ValueError:
            pass  # stream closed underneath us
        self.lines.put(self._EOF)

    def get(self, timeout: float) -> Optional[str]:
        """One line, None on EOF; raises queue.Empty on timeout."""
        item = self.lines.get(timeout=timeout)
        if item is self._EOF:
            return None
        return item


class SubprocessHandle(HarnessHandle):
    """Adapter over an external harness process speaking the line protocol.

    Orchestrator to harness: init {task_config}, learn {example},
    predict {query, query_id}, llm_result {request_id, content,
    prompt_tokens, completion_tokens}, shutdown {}.
    Harness to orchestrator: ready {}, ack {}, llm {request_id, messages,
    max_output_tokens, temperature}, prediction {query_id, label, aux},
    state {payload}, error {message}.
    """

    def __init__(
        self,
        candidate_id: str,
        argv: Sequence[str],
        cwd: Path,
        run: Optional[Run] = None,
        dataset_id: str = "",
        stderr_path: Optional[Path] = None,
        io_timeout_s: float = DEFAULT_IO_TIMEOUT_S,
    ):
        super().__init__(candidate_id, run, dataset_id)
        self.argv = list(argv)
        self.cwd = Path(cwd)
        self.stderr_path = stderr_path
        self.io_timeout_s = io_timeout_s
        self.process: Optional[subprocess.Popen] = None
        self._reader: Optional[_LineReader] = None
        self._stderr_file = None

    # -- low-level I/O --

    def _spawn(self) -> None:
        if self.stderr_path is not None:
            self.stderr_path.parent.mkdir(parents=True, exist_ok=True)
            self._stderr_file = self.stderr_path.open("ab")
            stderr = self._stderr_file
        else:
            stderr = subprocess.DEVNULL
        try:
            self.process = subprocess.Popen(
                self.argv,
                cwd=str(self.cwd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=stderr,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise HarnessProtocolError(f"cannot launch {self.argv!r}: {exc}", reason="crashed")
        self._reader = _LineReader(self.process.stdout)

    def _send(self, message: dict) -> None:
        if self.process is None or self.process.poll() is not None:
            raise HarnessProtocolError("harness process is not running", reason="crashed")
        try:
            self.process.stdin.write(json.dumps(message, ensure_ascii=False) + "\n")
            self.process.stdin.flush()
        except (BrokenPipeError, OSError):
            raise HarnessProtocolError("harness process closed its stdin", reason="crashed")

    def _recv(self) -> dict:
        try:
            line = self._reader.get(timeout=self.io_timeout_s)
        except queue.Empty:
            raise HarnessProtocolError(
                f"no reply within {self.io_timeout_s:.1f}s", reason="timeout"
            )
        if line is None:
            raise HarnessProtocolError("harness process exited", reason="crashed")
        line = line.strip()
        if not line:
            return self._recv()
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            raise HarnessProtocolError(
                f"undecodable protocol line: {line[:120]!r}", reason="malformed_message"
            )
        if not isinstance(message, dict) or "type" not in message:
            raise HarnessProtocolError(
                f"protocol message without a type: {line[:120]!r}", reason="malformed_message"
            )
        if message["type"] == "error":
            raise HarnessProtocolError(
                f"harness error: {message.get('message', '')}", reason="crashed"
            )
        return message

    # -- lifecycle --

    def init(self, config: TaskConfig) -> None:
        self._require_state(STATE_CREATED, "init")
        self._spawn()
        self._send({"type": "init", "task_config": config.to_json()})
        message = self._recv()
        if message["type"] != "ready":
            raise HarnessProtocolError(
                f"expected ready, got {message['type']!r}", reason="malformed_message"
            )
        self.state = STATE_INITIALIZED

    def learn(self, example: Example) -> None:
        self._require_state(STATE_INITIALIZED, "learn")
        if example.label is None:
            raise HarnessProtocolError("learn requires a labeled example")
        self._send({"type": "learn", "example": example.to_json()})
        while True:
            message = self._recv()
            if message["type"] == "state":
                self._log_state_update(example.example_id, str(message.get("payload", "")))
            elif message["type"] == "ack":
                return
            else:
                raise HarnessProtocolError(
                    f"unexpected {message['type']!r} during learn", reason="malformed_message"
                )

    def predict(self, query: Example, llm: LlmClient) -> Prediction:
        self._require_state(STATE_INITIALIZED, "predict")
        self._send({"type": "predict", "query": query.to_json(), "query_id": query.example_id})
        while True:
            message = self._recv()
            kind = message["type"]
            if kind == "llm":
                response = llm.complete(
                    message.get("messages", []),
                    max_output_tokens=int(message.get("max_output_tokens", 512)),
                    temperature=float(message.get("temperature", 0.0)),
                )
                self._send(
                    {
                        "type": "llm_result",
                        "request_id": message.get("request_id"),
                        "content": response.content,
                        "prompt_tokens": response.prompt_tokens,
                        "completion_tokens": response.completion_tokens,
                    }
                )
            elif kind == "state":
                self._log_state_update(query.example_id, str(message.get("payload", "")))
            elif kind == "prediction":
                if message.get("query_id") != query.example_id:
                    raise HarnessProtocolError(
                        f"prediction for {message.get('query_id')!r}, "
                        f"expected {query.example_id!r}",
                        reason="malformed_message",
                    )
                label = message.get("label")
                if not label or not isinstance(label, str):
                    raise HarnessProtocolError("prediction without a label", reason="malformed_message")
                self.llm_call_count += llm.call_count
                return Prediction(query.example_id, label, message.get("aux"))
            else:
                raise HarnessProtocolError(
                    f"unexpected {kind!r} during predict", reason="malformed_message"
                )

    def shutdown(self) -> None:
        if self.state == STATE_SHUT_DOWN:
            return
        if self.process is not None and self.process.poll() is None:
            try:
                self._send({"type": "shutdown"})
            except HarnessProtocolError:
                pass
            try:
                self.process.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                logger.warning("harness %s ignored shutdown; killing", self.candidate_id)
                self.process.kill()
                self.process.wait(timeout=5.0)
        if self.process is not None and self.process.stdin:
            try:
                self.process.stdin.close()
            except OSError:
                pass
        if self._stderr_file is not None:
            self._stderr_file.close()
            self._stderr_file = None
        self.state = STATE_SHUT_DOWN


# --- handle resolution ----------------------------------------------------------


@dataclass
class HarnessResources:
    """Shared read-only resources for harness construction."""

    retrieval_bundle: Optional[object] = None
    interpreter: str = DEFAULT_INTERPRETER


def resolve_entry(run: Run, record: CandidateRecord, interpreter: str = DEFAULT_INTERPRETER):
    """Work out how to run a candidate: ("native", name) from builtin.txt,
    or ("subprocess", argv) from the meta entry, an entry.txt in the
    harness directory, or the harness.py convention."""
    harness_dir = run.harness_dir(record.candidate_id)
    if record.entry:
        return ("subprocess", list(record.entry))
    builtin = harness_dir / "builtin.txt"
    if builtin.is_file():
        name = builtin.read_text(encoding="utf-8").strip().splitlines()
        if name:
            return ("native", name[0].strip())
    entry_file = harness_dir / "entry.txt"
    if entry_file.is_file():
        argv = [l.strip() for l in entry_file.read_text(encoding="utf-8").splitlines() if l.strip()]
        if argv:
            return ("subprocess", argv)
    if (harness_dir / "harness.py").is_file():
        return ("subprocess", [interpreter, "harness.py"])
    return None


def open_handle(
    run: Run,
    record: CandidateRecord,
    dataset_id: str,
    resources: Optional[HarnessResources] = None,
    trace: bool = True,
    io_timeout_s: float = DEFAULT_IO_TIMEOUT_S,
) -> HarnessHandle:
    resources = resources or HarnessResources()
    resolved = resolve_entry(run, record, resources.interpreter)
    if resolved is None:
        raise EmptyCandidate(f"{record.candidate_id}: no harness entry point")
    kind, spec = resolved
    trace_run = run if trace else None
    if kind == "native":
        from .reference import make_reference_harness

        harness = make_reference_harness(spec, resources)
        return NativeHandle(record.candidate_id, harness, trace_run, dataset_id)
    stderr_path = run.trace_dir(record.candidate_id) / "stderr.log" if trace else None
    return SubprocessHandle(
        record.candidate_id,
        spec,
        cwd=run.harness_dir(record.candidate_id),
        run=trace_run,
        dataset_id=dataset_id,
        stderr_path=stderr_path,
        io_timeout_s=io_timeout_s,
    )


# --- validation gate ---------------------------------------------------------------


@dataclass
class SmokeSpec:
    """Tiny task used by the pre-evaluation gate."""

    task: TaskConfig
    learn_examples: List[Example] = field(default_factory=list)
    query: Optional[Example] = None
    timeout_s: float = 30.0

    def __post_init__(self):
        if len(self.learn_examples) > 3:
            raise ValueError("smoke spec allows at most 3 labeled examples")
        for ex in self.learn_examples:
            if ex.label is None:
                raise ValueError("smoke learn examples must be labeled")
        if self.query is None:
            raise ValueError("smoke spec requires a query example")


@dataclass
class ValidationResult:
    passed: bool
    reason: Optional[str] = None
    detail: str = ""


def validate_candidate(
    run: Run,
    candidate_id: str,
    smoke: SmokeSpec,
    backend: Backend,
    resources: Optional[HarnessResources] = None,
) -> ValidationResult:
    """Run init, every smoke learn, and one predict against a mock backend.

    Passes iff every step completes within the smoke timeout with
    well-formed replies and the predicted label is in the label set. On
    failure the candidate status becomes validation_failed with the reason
    recorded; the store is otherwise untouched (no traces are written).
    """
    record = run.get_candidate(candidate_id)

    def fail(reason: str, detail: str) -> ValidationResult:
        run.set_status(candidate_id, "validation_failed", reason)
        logger.info("validation failed for %s: %s (%s)", candidate_id, reason, detail)
        return ValidationResult(False, reason, detail)

    deadline = time.monotonic() + smoke.timeout_s
    try:
        handle = open_handle(
            run, record, smoke.task.dataset_id, resources, trace=False, io_timeout_s=smoke.timeout_s
        )
    except EmptyCandidate as exc:
        return fail("empty_sources", str(exc))

    def remaining() -> float:
        return max(0.05, deadline - time.monotonic())

    try:
        try:
            if isinstance(handle, SubprocessHandle):
                handle.io_timeout_s = remaining()
            handle.init(smoke.task)
            for example in smoke.learn_examples:
                if time.monotonic() > deadline:
                    return fail("timeout", "smoke budget exhausted before learn")
                if isinstance(handle, SubprocessHandle):
                    handle.io_timeout_s = remaining()
                handle.learn(example)
            if time.monotonic() > deadline:
                return fail("timeout", "smoke budget exhausted before predict")
            if isinstance(handle, SubprocessHandle):
                handle.io_timeout_s = remaining()
            llm = LlmClient(backend)
            prediction = handle.predict(smoke.query, llm)
        except HarnessProtocolError as exc:
            reason = exc.reason if exc.reason in ("timeout", "malformed_message", "crashed") else "protocol"
            return fail(reason, str(exc))
        except Exception as exc:  # native harness raised
            return fail("crashed", f"{type(exc).__name__}: {exc}")
        if smoke.task.label_set is not None:
            normalized = {l.strip().casefold() for l in smoke.task.label_set}
            if prediction.label.strip().casefold() not in normalized:
                return fail("invalid_label", f"predicted {prediction.label!r}")
        return ValidationResult(True)
    finally:
        try:
            handle.shutdown()
        except Exception:
            logger.debug("shutdown after validation failed for %s", candidate_id, exc_info=True)
