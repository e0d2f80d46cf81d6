/**
 * Prompt construction. classificationPrompt must stay byte-identical to
 * the orchestrator's native template: the cross-language equivalence test
 * compares logged prompt payloads directly.
 */

import { Example } from "./protocol";

export function classificationPrompt(
  instruction: string,
  labelSet: string[] | null,
  examples: Example[],
  queryText: string,
): string {
  const lines: string[] = [];
  if (instruction) {
    lines.push(instruction, "");
  }
  if (labelSet && labelSet.length > 0) {
    lines.push("Valid labels: " + labelSet.join(", "), "");
  }
  for (const example of examples) {
    lines.push(`Input: ${example.input_text}`, `Label: ${example.label}`, "");
  }
  lines.push(`Input: ${queryText}`, "Label:");
  return lines.join("\n");
}

/** First label contained in the response (case-insensitively), else the
 * trimmed response itself. */
export function parseLabel(responseText: string, labelSet: string[] | null): string {
  if (labelSet) {
    const folded = responseText.toLowerCase();
    for (const label of labelSet) {
      if (folded.includes(label.toLowerCase())) {
        return label;
      }
    }
  }
  return responseText.trim();
}
