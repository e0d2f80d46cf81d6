/**
 * Cross-language equivalence: the external few-shot harness, evaluated by
 * the orchestrator CLI on the fixture dataset with the mock backend,
 * produces a score report identical to the native few-shot harness and
 * the same trace event sequences.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

import { DIST, hsearch, readScores, readTrace, tempDir, writeConfig } from "./helpers";

describe("cross-language equivalence with the native few-shot harness", () => {
  const workdir = tempDir("pack-equivalence-");
  const runDir = path.join(workdir, "run");
  const nativeId = "c0001_native_few_shot";
  const externalId = "c0002_external_few_shot";

  beforeAll(() => {
    const nativeSeed = path.join(workdir, "seeds", "native");
    const externalSeed = path.join(workdir, "seeds", "external");
    fs.mkdirSync(nativeSeed, { recursive: true });
    fs.mkdirSync(externalSeed, { recursive: true });
    fs.writeFileSync(path.join(nativeSeed, "builtin.txt"), "few_shot:8\n");
    fs.writeFileSync(
      path.join(externalSeed, "entry.txt"),
      ["node", path.join(DIST, "few_shot_harness.js"), "8"].join("\n") + "\n",
    );

    const config = writeConfig(workdir, {
      seeds: [
        { name: "native_few_shot", dir: nativeSeed },
        { name: "external_few_shot", dir: externalSeed },
      ],
    });
    hsearch("init", "--run", runDir, "--config", config);
    hsearch("seed", "--run", runDir);
    hsearch("eval", "--run", runDir, nativeId);
    hsearch("eval", "--run", runDir, externalId);
  }, 120_000);

  it("score reports are identical (accuracy and token metrics)", () => {
    const native = readScores(runDir, nativeId);
    const external = readScores(runDir, externalId);
    expect(external.per_dataset).toEqual(native.per_dataset);
    expect(external.aggregate).toEqual(native.aggregate);
  });

  it("the external harness passes the validation gate", () => {
    const out = hsearch("validate", "--run", runDir, externalId);
    expect(out.trim()).toBe("pass");
  });

  it("trace event sequences match event for event", () => {
    const exampleIds = [
      ...Array.from({ length: 6 }, (_, i) => `tr${i}`),
      ...Array.from({ length: 4 }, (_, i) => `se${i}`),
    ];
    for (const exampleId of exampleIds) {
      const native = readTrace(runDir, nativeId, "toy", exampleId);
      const external = readTrace(runDir, externalId, "toy", exampleId);
      const strip = (events: any[]) =>
        events.map((e) => ({
          seq: e.seq,
          kind: e.kind,
          payload: e.payload,
          token_count: e.token_count,
        }));
      expect(strip(external)).toEqual(strip(native));
    }
  });

  it("prompts in the traces are byte-identical", () => {
    for (const exampleId of ["se0", "se3"]) {
      const nativePrompts = readTrace(runDir, nativeId, "toy", exampleId)
        .filter((e: any) => e.kind === "prompt")
        .map((e: any) => e.payload);
      const externalPrompts = readTrace(runDir, externalId, "toy", exampleId)
        .filter((e: any) => e.kind === "prompt")
        .map((e: any) => e.payload);
      expect(externalPrompts).toEqual(nativePrompts);
    }
  });
});
