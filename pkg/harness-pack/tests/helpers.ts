import { execFileSync, spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

export const PACK_ROOT = path.resolve(__dirname, "..");
export const DIST = path.join(PACK_ROOT, "dist");

export function tempDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

export function writeJsonl(file: string, rows: object[]): void {
  fs.writeFileSync(file, rows.map((r) => JSON.stringify(r)).join("\n") + "\n");
}

/** The toy two-label task shared by the equivalence and proposer tests.
 * Test inputs carry probe-<label> markers that never occur in training
 * text, so substring mock rules classify queries deterministically. */
export function writeDataset(dir: string): { train: string; search: string } {
  const labels = ["alpha", "beta"];
  const train = path.join(dir, "train.jsonl");
  const search = path.join(dir, "search.jsonl");
  writeJsonl(
    train,
    Array.from({ length: 6 }, (_, i) => ({
      id: `tr${i}`,
      text: `sample ${i} mentions ${labels[i % 2]} things`,
      label: labels[i % 2],
    })),
  );
  writeJsonl(
    search,
    Array.from({ length: 4 }, (_, i) => ({
      id: `se${i}`,
      text: `held out ${i} mentions probe-${labels[i % 2]} things`,
      label: labels[i % 2],
    })),
  );
  return { train, search };
}

export interface ConfigOptions {
  iterations?: number;
  k?: number;
  seeds: { name: string; dir: string }[];
  proposerCommand?: string[];
}

export function writeConfig(workdir: string, options: ConfigOptions): string {
  const { train, search } = writeDataset(workdir);
  const config: Record<string, unknown> = {
    run_id: "pack-test",
    objectives: [
      { name: "accuracy", direction: "maximize" },
      { name: "context_tokens", direction: "minimize" },
    ],
    search: {
      iterations: options.iterations ?? 0,
      candidates_per_iteration: options.k ?? 1,
    },
    seeds: options.seeds,
    datasets: [
      {
        id: "toy",
        kind: "online_classification",
        train_file: train,
        eval_file: search,
        instruction: "Assign one label to the input.",
      },
    ],
    backend: {
      kind: "mock",
      default_output: "alpha",
      rules: [
        { pattern: "probe-alpha", output: "alpha" },
        { pattern: "probe-beta", output: "beta" },
      ],
    },
    validation: {
      instruction: "Assign one label to the input.",
      label_set: ["alpha", "beta"],
      examples: [{ id: "s1", text: "probe-alpha text", label: "alpha" }],
      query: { id: "sq", text: "query probe-alpha" },
      timeout_s: 20,
      rules: [{ pattern: "probe-alpha", output: "alpha" }],
    },
  };
  if (options.proposerCommand) {
    config.proposer = { command: options.proposerCommand, timeout_s: 60 };
  }
  const file = path.join(workdir, "config.json");
  fs.writeFileSync(file, JSON.stringify(config, null, 2));
  return file;
}

/** Run the orchestrator CLI; throws on nonzero exit. */
export function hsearch(...args: string[]): string {
  return execFileSync("hsearch", args, { encoding: "utf-8" });
}

export function hsearchStatus(...args: string[]): { status: number; stdout: string; stderr: string } {
  const result = spawnSync("hsearch", args, { encoding: "utf-8" });
  return { status: result.status ?? -1, stdout: result.stdout, stderr: result.stderr };
}

export function readTrace(runDir: string, candidateId: string, dataset: string, exampleId: string) {
  const file = path.join(runDir, "candidates", candidateId, "traces", dataset, `${exampleId}.jsonl`);
  return fs
    .readFileSync(file, "utf-8")
    .split("\n")
    .filter((l) => l.trim())
    .map((l) => JSON.parse(l));
}

export function readScores(runDir: string, candidateId: string) {
  const file = path.join(runDir, "candidates", candidateId, "scores.json");
  return JSON.parse(fs.readFileSync(file, "utf-8"));
}
