/**
 * The scripted proposer drives a complete search (N=3, k=1) through the
 * orchestrator CLI: queued candidate directories are dropped one per
 * iteration, validated, evaluated, and the run finishes with a frontier.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

import { DIST, hsearch, tempDir, writeConfig } from "./helpers";

describe("scripted proposer drives a full search", () => {
  const workdir = tempDir("pack-proposer-");
  const runDir = path.join(workdir, "run");
  const queue = path.join(workdir, "queue");
  let searchOutput = "";

  beforeAll(() => {
    fs.mkdirSync(queue, { recursive: true });
    for (const [i, spec] of ["few_shot:2", "few_shot:4", "label_primed"].entries()) {
      const dir = path.join(queue, `p${i}_${spec.replace(":", "_")}`);
      fs.mkdirSync(dir);
      fs.writeFileSync(path.join(dir, "builtin.txt"), spec + "\n");
      fs.writeFileSync(path.join(dir, "note.txt"), `queued variant ${i}\n`);
    }
    const seedDir = path.join(workdir, "seeds", "zero_shot");
    fs.mkdirSync(seedDir, { recursive: true });
    fs.writeFileSync(path.join(seedDir, "builtin.txt"), "zero_shot\n");

    const config = writeConfig(workdir, {
      iterations: 3,
      k: 1,
      seeds: [{ name: "zero_shot", dir: seedDir }],
      proposerCommand: [
        "node",
        path.join(DIST, "scripted_proposer.js"),
        "--queue",
        queue,
        "{DROP_DIR}",
        "{K}",
      ],
    });
    hsearch("init", "--run", runDir, "--config", config);
    searchOutput = hsearch("search", "--run", runDir);
  }, 180_000);

  it("all three iterations complete", () => {
    const log = fs
      .readFileSync(path.join(runDir, "iterations.jsonl"), "utf-8")
      .split("\n")
      .filter((l) => l.trim())
      .map((l) => JSON.parse(l));
    expect(log.map((e) => e.iteration)).toEqual([1, 2, 3]);
    expect(log.every((e) => e.status === "completed")).toBe(true);
  });

  it("every queued candidate was ingested and evaluated", () => {
    const candidates = fs.readdirSync(path.join(runDir, "candidates")).sort();
    expect(candidates).toHaveLength(4); // 1 seed + 3 proposals
    for (const id of candidates) {
      const meta = JSON.parse(
        fs.readFileSync(path.join(runDir, "candidates", id, "meta.json"), "utf-8"),
      );
      expect(meta.status).toBe("evaluated");
    }
    expect(fs.existsSync(queue) && fs.readdirSync(queue)).toEqual([]);
  });

  it("the search printed a frontier", () => {
    const lines = searchOutput.trim().split("\n");
    expect(lines[0]).toBe("candidate_id,accuracy,context_tokens");
    expect(lines.length).toBeGreaterThan(1);
  });

  it("proposer transcripts were saved", () => {
    for (const t of [1, 2, 3]) {
      const transcript = path.join(runDir, "proposals", `iter_${t}`, "proposer_transcript.txt");
      expect(fs.readFileSync(transcript, "utf-8")).toContain("proposed ");
    }
  });
});
