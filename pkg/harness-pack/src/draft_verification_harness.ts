#!/usr/bin/env node
/**
 * External draft-verification harness: a draft label from the five most
 * similar memory examples, then a verification call over confirmers
 * (same label as the draft) and challengers (different labels), both
 * ranked by TF-IDF similarity to the query. Falls back to a single
 * few-shot call while memory holds fewer than five examples.
 */

import { classificationPrompt, parseLabel } from "./prompt";
import { Example, Harness, LlmClient, Prediction, TaskConfig, serve } from "./protocol";
import { TfidfIndex } from "./tfidf";

const MIN_MEMORY = 5;
const NEIGHBORS = 5;
const CONFIRMERS = 5;
const CHALLENGERS = 5;

class DraftVerificationHarness implements Harness {
  private config: TaskConfig | null = null;
  private readonly memory: Example[] = [];
  private index: TfidfIndex | null = null;

  onInit(config: TaskConfig): void {
    this.config = config;
  }

  onLearn(example: Example): string {
    this.memory.push(example);
    this.index = null; // rebuilt lazily on the next retrieval
    return `memory_size=${this.memory.length}`;
  }

  private ranked(text: string): Example[] {
    if (this.index === null) {
      this.index = new TfidfIndex(this.memory.map((e) => e.input_text));
    }
    return this.index.ranked(text).map((i) => this.memory[i]);
  }

  async onPredict(query: Example, llm: LlmClient): Promise<Prediction> {
    const config = this.config!;
    const labels = config.label_set;

    if (this.memory.length < MIN_MEMORY) {
      const prompt = classificationPrompt(config.instruction, labels, this.memory, query.input_text);
      const response = await llm.complete([{ role: "user", content: prompt }]);
      return {
        label: parseLabel(response.content, labels),
        aux: { mode: "few_shot_fallback", memory_size: this.memory.length },
      };
    }

    const neighbors = this.ranked(query.input_text);
    const draftPrompt = classificationPrompt(
      config.instruction,
      labels,
      neighbors.slice(0, NEIGHBORS),
      query.input_text,
    );
    const draftResponse = await llm.complete([{ role: "user", content: draftPrompt }]);
    const draft = parseLabel(draftResponse.content, labels);

    const confirmers = neighbors.filter((e) => e.label === draft).slice(0, CONFIRMERS);
    const challengers = neighbors.filter((e) => e.label !== draft).slice(0, CHALLENGERS);

    const lines: string[] = [];
    if (config.instruction) lines.push(config.instruction, "");
    if (labels && labels.length > 0) lines.push("Valid labels: " + labels.join(", "), "");
    lines.push(`Initial label: ${draft}`, "");
    lines.push("Examples sharing the initial label:");
    for (const example of confirmers) {
      lines.push(`Input: ${example.input_text}`, `Label: ${example.label}`);
    }
    lines.push("");
    lines.push("Examples with different labels:");
    for (const example of challengers) {
      lines.push(`Input: ${example.input_text}`, `Label: ${example.label}`);
    }
    lines.push("");
    lines.push("Keep or revise the initial label.", "");
    lines.push(`Input: ${query.input_text}`, "Label:");

    const verify = await llm.complete([{ role: "user", content: lines.join("\n") }]);
    return {
      label: parseLabel(verify.content, labels),
      aux: {
        mode: "two_call",
        draft_label: draft,
        confirmers: confirmers.length,
        challengers: challengers.length,
      },
    };
  }
}

serve(new DraftVerificationHarness());
