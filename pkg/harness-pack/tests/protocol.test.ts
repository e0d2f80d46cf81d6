/**
 * Byte-level protocol conformance: every line the harnesses emit must
 * parse as a valid protocol message with the fields the orchestrator-side
 * parser requires.
 */

import { spawn } from "node:child_process";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { DIST } from "./helpers";

const HARNESS_TYPES = new Set(["ready", "ack", "llm", "prediction", "state", "error"]);

interface Exchange {
  lines: string[];
  exitCode: number | null;
}

/** Drive a full init/learn/predict/shutdown exchange, answering llm
 * requests with a canned llm_result, and collect raw stdout lines. */
function drive(argv: string[], mockOutput: string): Promise<Exchange> {
  return new Promise((resolve, reject) => {
    const child = spawn(argv[0], argv.slice(1), { stdio: ["pipe", "pipe", "inherit"] });
    const lines: string[] = [];
    let buffer = "";
    const send = (msg: object) => child.stdin.write(JSON.stringify(msg) + "\n");

    send({
      type: "init",
      task_config: {
        task_kind: "online_classification",
        dataset_id: "toy",
        label_set: ["alpha", "beta"],
        instruction: "Assign one label.",
      },
    });

    let learned = 0;
    const examples = [
      { example_id: "a", input_text: "first alpha-ish text", label: "alpha" },
      { example_id: "b", input_text: "second beta-ish text", label: "beta" },
      { example_id: "c", input_text: "third alpha-ish text", label: "alpha" },
      { example_id: "d", input_text: "fourth beta-ish text", label: "beta" },
      { example_id: "e", input_text: "fifth alpha-ish text", label: "alpha" },
    ];

    child.stdout.on("data", (chunk: Buffer) => {
      buffer += chunk.toString("utf-8");
      let index;
      while ((index = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, index);
        buffer = buffer.slice(index + 1);
        if (!line.trim()) continue;
        lines.push(line);
        const msg = JSON.parse(line);
        if (msg.type === "ready" || msg.type === "ack") {
          if (learned < examples.length) {
            send({ type: "learn", example: examples[learned++] });
          } else {
            send({ type: "predict", query: { example_id: "q", input_text: "query text", label: null }, query_id: "q" });
          }
        } else if (msg.type === "llm") {
          send({
            type: "llm_result",
            request_id: msg.request_id,
            content: mockOutput,
            prompt_tokens: 10,
            completion_tokens: 2,
          });
        } else if (msg.type === "prediction") {
          send({ type: "shutdown" });
        } else if (msg.type === "error") {
          child.kill();
          reject(new Error(`harness error: ${msg.message}`));
        }
      }
    });
    child.on("exit", (code) => resolve({ lines, exitCode: code }));
    child.on("error", reject);
  });
}

function assertConformant(lines: string[]) {
  for (const line of lines) {
    const msg = JSON.parse(line); // throws on any non-JSON output
    expect(typeof msg.type).toBe("string");
    expect(HARNESS_TYPES.has(msg.type)).toBe(true);
    if (msg.type === "llm") {
      expect(typeof msg.request_id).toBe("number");
      expect(Array.isArray(msg.messages)).toBe(true);
      for (const m of msg.messages) {
        expect(["system", "user", "assistant"]).toContain(m.role);
        expect(typeof m.content).toBe("string");
      }
      expect(typeof msg.max_output_tokens).toBe("number");
      expect(typeof msg.temperature).toBe("number");
    }
    if (msg.type === "prediction") {
      expect(typeof msg.query_id).toBe("string");
      expect(typeof msg.label).toBe("string");
      expect(msg.label.length).toBeGreaterThan(0);
    }
    if (msg.type === "state") {
      expect(typeof msg.payload).toBe("string");
    }
  }
}

describe("wire protocol conformance", () => {
  it("few-shot harness emits only valid messages and exits cleanly", async () => {
    const { lines, exitCode } = await drive(
      ["node", path.join(DIST, "few_shot_harness.js"), "8"],
      "alpha",
    );
    assertConformant(lines);
    expect(exitCode).toBe(0);
    const kinds = lines.map((l) => JSON.parse(l).type);
    expect(kinds[0]).toBe("ready");
    expect(kinds.filter((k) => k === "state")).toHaveLength(5);
    expect(kinds.filter((k) => k === "llm")).toHaveLength(1);
    expect(kinds[kinds.length - 1]).toBe("prediction");
  });

  it("draft-verification harness makes two calls once memory reaches five", async () => {
    const { lines, exitCode } = await drive(
      ["node", path.join(DIST, "draft_verification_harness.js")],
      "alpha",
    );
    assertConformant(lines);
    expect(exitCode).toBe(0);
    const kinds = lines.map((l) => JSON.parse(l).type);
    expect(kinds.filter((k) => k === "llm")).toHaveLength(2);
    const prediction = JSON.parse(lines[lines.length - 1]);
    expect(prediction.aux.mode).toBe("two_call");
    expect(prediction.aux.confirmers).toBeLessThanOrEqual(5);
    expect(prediction.aux.challengers).toBeLessThanOrEqual(5);
  });

  it("unknown message types produce an error reply, not garbage", async () => {
    const child = spawn("node", [path.join(DIST, "few_shot_harness.js")], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    child.stdin.write(JSON.stringify({ type: "dance" }) + "\n");
    const line: string = await new Promise((resolve) => {
      let buf = "";
      child.stdout.on("data", (chunk: Buffer) => {
        buf += chunk.toString();
        const i = buf.indexOf("\n");
        if (i >= 0) resolve(buf.slice(0, i));
      });
    });
    const msg = JSON.parse(line);
    expect(msg.type).toBe("error");
    child.kill();
  });
});
