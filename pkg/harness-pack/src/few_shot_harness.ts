#!/usr/bin/env node
/**
 * External few-shot harness: one call over the last n memory examples in
 * arrival order (n from argv, "all" for the whole memory). Mirrors the
 * orchestrator's native few-shot harness byte for byte.
 *
 * Usage: node few_shot_harness.js [n|all]   (default 8)
 */

import { classificationPrompt, parseLabel } from "./prompt";
import { Example, Harness, LlmClient, Prediction, TaskConfig, serve } from "./protocol";

class FewShotHarness implements Harness {
  private config: TaskConfig | null = null;
  private readonly memory: Example[] = [];

  constructor(private readonly n: number | null) {}

  onInit(config: TaskConfig): void {
    this.config = config;
  }

  onLearn(example: Example): string {
    this.memory.push(example);
    return `memory_size=${this.memory.length}`;
  }

  private window(): Example[] {
    if (this.n === null) {
      return this.memory;
    }
    return this.n > 0 ? this.memory.slice(-this.n) : [];
  }

  async onPredict(query: Example, llm: LlmClient): Promise<Prediction> {
    const config = this.config!;
    const prompt = classificationPrompt(
      config.instruction,
      config.label_set,
      this.window(),
      query.input_text,
    );
    const response = await llm.complete([{ role: "user", content: prompt }]);
    return { label: parseLabel(response.content, config.label_set), aux: null };
  }
}

const arg = process.argv[2] ?? "8";
serve(new FewShotHarness(arg === "all" ? null : parseInt(arg, 10)));
