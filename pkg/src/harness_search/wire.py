"""Harness-side event loop for the stdio wire protocol.

A single-file harness can be as small as:

    from harness_search.reference import FewShotHarness
    from harness_search.wire import serve

    if __name__ == "__main__":
        serve(FewShotHarness(n=8))

The loop reads one JSON message per stdin line and writes one JSON message
per stdout line; diagnostics belong on stderr.
"""

from __future__ import annotations

import json
import sys
from typing import Optional, TextIO

from .backends import LlmResponse
from .harness import Example, Harness, TaskConfig


class WireLlm:
    """LLM client facade that proxies calls through the orchestrator."""

    def __init__(self, server: "_WireServer"):
        self._server = server
        self._next_id = 0

    def complete(self, messages, max_output_tokens: int = 512, temperature: float = 0.0) -> LlmResponse:
        request_id = self._next_id
        self._next_id += 1
        payload = [
            m if isinstance(m, dict) else {"role": m.role, "content": m.content} for m in messages
        ]
        self._server.emit(
            {
                "type": "llm",
                "request_id": request_id,
                "messages": payload,
                "max_output_tokens": max_output_tokens,
                "temperature": temperature,
            }
        )
        reply = self._server.read_message()
        if reply is None or reply.get("type") != "llm_result":
            raise RuntimeError(f"expected llm_result, got {reply!r}")
        if reply.get("request_id") != request_id:
            raise RuntimeError(
                f"llm_result for request {reply.get('request_id')!r}, expected {request_id}"
            )
        return LlmResponse(
            content=reply.get("content", ""),
            prompt_tokens=int(reply.get("prompt_tokens", 0)),
            completion_tokens=int(reply.get("completion_tokens", 0)),
            backend_id="wire",
        )


class _WireServer:
    def __init__(self, harness: Harness, stdin: TextIO, stdout: TextIO):
        self.harness = harness
        self.stdin = stdin
        self.stdout = stdout

    def emit(self, message: dict) -> None:
        self.stdout.write(json.dumps(message, ensure_ascii=False) + "\n")
        self.stdout.flush()

    def read_message(self) -> Optional[dict]:
        while True:
            line = self.stdin.readline()
            if not line:
                return None
            line = line.strip()
            if line:
                return json.loads(line)

    def run(self) -> int:
        while True:
            try:
                message = self.read_message()
            except json.JSONDecodeError as exc:
                self.emit({"type": "error", "message": f"undecodable input line: {exc}"})
                return 1
            if message is None:
                return 0  # orchestrator went away
            kind = message.get("type")
            try:
                if kind == "init":
                    self.harness.on_init(TaskConfig.from_json(message["task_config"]))
                    self.emit({"type": "ready"})
                elif kind == "learn":
                    summary = self.harness.on_learn(Example.from_json(message["example"]))
                    if summary is not None:
                        self.emit({"type": "state", "payload": summary})
                    self.emit({"type": "ack"})
                elif kind == "predict":
                    query = Example.from_json(message["query"])
                    prediction = self.harness.on_predict(query, WireLlm(self))
                    self.emit(
                        {
                            "type": "prediction",
                            "query_id": message.get("query_id", query.example_id),
                            "label": prediction.label,
                            "aux": prediction.aux,
                        }
                    )
                elif kind == "shutdown":
                    self.harness.on_shutdown()
                    return 0
                else:
                    self.emit({"type": "error", "message": f"unknown message type {kind!r}"})
                    return 1
            except Exception as exc:
                self.emit({"type": "error", "message": f"{type(exc).__name__}: {exc}"})
                return 1


def serve(harness: Harness, stdin: TextIO = None, stdout: TextIO = None) -> None:
    """Run the harness over stdin/stdout until shutdown; exits the process."""
    server = _WireServer(harness, stdin or sys.stdin, stdout or sys.stdout)
    sys.exit(server.run())
