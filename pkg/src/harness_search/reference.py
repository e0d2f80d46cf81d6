"""Reference harnesses: the baselines plus the discovered strategies.

Five harnesses, all constructible by name (`zero_shot`, `few_shot:<n|all>`,
`draft_verification`, `label_primed`, `math_retrieval`) and shipped as seed
source directories for the search loop.

Prompt construction is centralized here; the evaluator's zero-cost
baseline is the exact zero-shot template, so the zero-shot harness reports
zero additional context by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .backends import ChatMessage
from .harness import Example, Harness, HarnessResources, LlmClient, Prediction, TaskConfig
from .retrieval import (
    RetrievalBundle,
    RouteConfig,
    TfidfIndex,
    build_tfidf,
    route_retrieve,
    tfidf_top_k,
)

SECTION_KINDS = ("instruction", "label_primer", "coverage", "contrastive", "examples", "query")

DEFAULT_CONTRASTIVE_PAIRS = 3
DRAFT_MIN_MEMORY = 5
DRAFT_NEIGHBORS = 5
DRAFT_CONFIRMERS = 5
DRAFT_CHALLENGERS = 5


# --- prompt construction -------------------------------------------------------


def classification_prompt(
    instruction: str,
    label_set: Optional[Sequence[str]],
    examples: Sequence[Example],
    query_text: str,
) -> str:
    """Canonical classification template; with no examples this is exactly
    the zero-shot prompt that defines the context-cost zero point."""
    lines: List[str] = []
    if instruction:
        lines.append(instruction)
        lines.append("")
    if label_set:
        lines.append("Valid labels: " + ", ".join(label_set))
        lines.append("")
    for example in examples:
        lines.append(f"Input: {example.input_text}")
        lines.append(f"Label: {example.label}")
        lines.append("")
    lines.append(f"Input: {query_text}")
    lines.append("Label:")
    return "\n".join(lines)


def classification_messages(
    instruction: str,
    label_set: Optional[Sequence[str]],
    examples: Sequence[Example],
    query_text: str,
) -> Tuple[ChatMessage, ...]:
    return (ChatMessage("user", classification_prompt(instruction, label_set, examples, query_text)),)


def qa_prompt(
    instruction: str, worked: Sequence[Tuple[str, str]], query_text: str
) -> str:
    """Worked-example template for question answering."""
    lines: List[str] = []
    if instruction:
        lines.append(instruction)
        lines.append("")
    for i, (problem, solution) in enumerate(worked, start=1):
        lines.append(f"Worked example {i}:")
        lines.append(f"Problem: {problem}")
        lines.append(f"Solution: {solution}")
        lines.append("")
    lines.append(f"Problem: {query_text}")
    lines.append("Answer:")
    return "\n".join(lines)


def qa_messages(
    instruction: str, worked: Sequence[Tuple[str, str]], query_text: str
) -> Tuple[ChatMessage, ...]:
    return (ChatMessage("user", qa_prompt(instruction, worked, query_text)),)


def parse_label(response_text: str, label_set: Optional[Sequence[str]]) -> str:
    """First label contained in the response (case-folded), else the
    trimmed response itself."""
    if label_set:
        folded = response_text.casefold()
        for label in label_set:
            if label.casefold() in folded:
                return label
    return response_text.strip()


@dataclass
class PromptPlan:
    """Ordered prompt sections; exactly one query section, always last."""

    sections: List[Tuple[str, str]] = field(default_factory=list)

    def add(self, kind: str, text: str) -> None:
        if kind not in SECTION_KINDS:
            raise ValueError(f"unknown section kind {kind!r}")
        self.sections.append((kind, text))

    def validate(self) -> None:
        kinds = [k for k, _ in self.sections]
        if kinds.count("query") != 1 or kinds[-1] != "query":
            raise ValueError("a prompt plan needs exactly one query section, last")

    def render(self) -> str:
        self.validate()
        return "\n\n".join(text for _, text in self.sections)

    def kinds(self) -> List[str]:
        return [k for k, _ in self.sections]


# --- memory ---------------------------------------------------------------------


class MemoryStore:
    """Growing memory of past labeled examples with a lazily rebuilt
    TF-IDF index; append-only during one evaluation."""

    def __init__(self):
        self.examples: List[Example] = []
        self._index: Optional[TfidfIndex] = None

    def __len__(self) -> int:
        return len(self.examples)

    def add(self, example: Example) -> None:
        self.examples.append(example)
        self._index = None

    @property
    def index(self) -> Optional[TfidfIndex]:
        if self._index is None and self.examples:
            self._index = build_tfidf([e.input_text for e in self.examples])
        return self._index

    def most_similar(self, text: str, k: int) -> List[Example]:
        if not self.examples:
            return []
        k = min(k, len(self.examples))
        return [self.examples[i] for i, _ in tfidf_top_k(self.index, text, k)]

    def ranked(self, text: str) -> List[Example]:
        return self.most_similar(text, len(self.examples))


# --- harnesses ---------------------------------------------------------------------


class ZeroShotHarness(Harness):
    """Single call: instruction, label listing, query. The zero point of
    the additional-context metric."""

    def __init__(self):
        self.config: Optional[TaskConfig] = None

    def on_init(self, config: TaskConfig) -> None:
        self.config = config

    def on_learn(self, example: Example) -> Optional[str]:
        return "memory_size=0"

    def on_predict(self, query: Example, llm: LlmClient) -> Prediction:
        messages = classification_messages(
            self.config.instruction, self.config.label_set, [], query.input_text
        )
        response = llm.complete(messages)
        return Prediction(query.example_id, parse_label(response.content, self.config.label_set))


class FewShotHarness(Harness):
    """Single call over the last n memory examples in arrival order;
    n=None means the full memory. n=0 degenerates to zero-shot exactly."""

    def __init__(self, n: Optional[int] = None):
        self.n = n
        self.config: Optional[TaskConfig] = None
        self.memory = MemoryStore()

    def on_init(self, config: TaskConfig) -> None:
        self.config = config

    def on_learn(self, example: Example) -> Optional[str]:
        self.memory.add(example)
        return f"memory_size={len(self.memory)}"

    def _window(self) -> List[Example]:
        if self.n is None:
            return list(self.memory.examples)
        return list(self.memory.examples[-self.n :]) if self.n > 0 else []

    def on_predict(self, query: Example, llm: LlmClient) -> Prediction:
        messages = classification_messages(
            self.config.instruction, self.config.label_set, self._window(), query.input_text
        )
        response = llm.complete(messages)
        return Prediction(query.example_id, parse_label(response.content, self.config.label_set))


class DraftVerificationHarness(Harness):
    """Two-call procedure: a draft label from nearest neighbors, then a
    verification call over confirmers (same label as the draft) and
    challengers (different labels). Falls back to a single few-shot call
    until enough labeled examples have accumulated."""

    def __init__(self, min_memory: int = DRAFT_MIN_MEMORY):
        self.min_memory = min_memory
        self.config: Optional[TaskConfig] = None
        self.memory = MemoryStore()

    def on_init(self, config: TaskConfig) -> None:
        self.config = config

    def on_learn(self, example: Example) -> Optional[str]:
        self.memory.add(example)
        return f"memory_size={len(self.memory)}"

    def on_predict(self, query: Example, llm: LlmClient) -> Prediction:
        labels = self.config.label_set
        if len(self.memory) < self.min_memory:
            messages = classification_messages(
                self.config.instruction, labels, list(self.memory.examples), query.input_text
            )
            response = llm.complete(messages)
            return Prediction(
                query.example_id,
                parse_label(response.content, labels),
                aux={"mode": "few_shot_fallback", "memory_size": len(self.memory)},
            )

        neighbors = self.memory.most_similar(query.input_text, DRAFT_NEIGHBORS)
        draft_messages = classification_messages(
            self.config.instruction, labels, neighbors, query.input_text
        )
        draft = parse_label(llm.complete(draft_messages).content, labels)

        ranked = self.memory.ranked(query.input_text)
        confirmers = [e for e in ranked if e.label == draft][:DRAFT_CONFIRMERS]
        challengers = [e for e in ranked if e.label != draft][:DRAFT_CHALLENGERS]

        lines: List[str] = []
        if self.config.instruction:
            lines += [self.config.instruction, ""]
        if labels:
            lines += ["Valid labels: " + ", ".join(labels), ""]
        lines += [f"Initial label: {draft}", ""]
        lines.append("Examples sharing the initial label:")
        for example in confirmers:
            lines += [f"Input: {example.input_text}", f"Label: {example.label}"]
        lines.append("")
        lines.append("Examples with different labels:")
        for example in challengers:
            lines += [f"Input: {example.input_text}", f"Label: {example.label}"]
        lines.append("")
        lines += ["Keep or revise the initial label.", ""]
        lines += [f"Input: {query.input_text}", "Label:"]
        verify = llm.complete((ChatMessage("user", "\n".join(lines)),))
        return Prediction(
            query.example_id,
            parse_label(verify.content, labels),
            aux={
                "mode": "two_call",
                "draft_label": draft,
                "confirmers": len(confirmers),
                "challengers": len(challengers),
            },
        )


class LabelPrimedHarness(Harness):
    """One larger call built from a label primer, a per-label coverage
    block, and query-anchored contrastive pairs."""

    def __init__(self, max_pairs: int = DEFAULT_CONTRASTIVE_PAIRS):
        self.max_pairs = max_pairs
        self.config: Optional[TaskConfig] = None
        self.memory = MemoryStore()
        self.last_plan: Optional[PromptPlan] = None

    def on_init(self, config: TaskConfig) -> None:
        self.config = config

    def on_learn(self, example: Example) -> Optional[str]:
        self.memory.add(example)
        return f"memory_size={len(self.memory)}"

    def _coverage(self, query_text: str) -> List[Example]:
        """The single most query-similar example per label present in memory."""
        if not self.memory.examples:
            return []
        ranked = self.memory.ranked(query_text)
        best: Dict[str, Example] = {}
        for example in ranked:
            if example.label not in best:
                best[example.label] = example
        return [best[l] for l in sorted(best)]

    def _contrastive(self, query_text: str) -> List[Tuple[Example, Example]]:
        """Query-anchored pairing: for each near neighbor, its own nearest
        neighbor with a different label."""
        if len(self.memory) < 2:
            return []
        ranked = self.memory.ranked(query_text)
        pairs: List[Tuple[Example, Example]] = []
        used: set = set()
        for anchor in ranked:
            if len(pairs) >= self.max_pairs:
                break
            if id(anchor) in used:
                continue
            partners = self.memory.ranked(anchor.input_text)
            partner = next(
                (p for p in partners if p.label != anchor.label and id(p) not in used), None
            )
            if partner is None:
                continue
            pairs.append((anchor, partner))
            used.add(id(anchor))
            used.add(id(partner))
        return pairs

    def on_predict(self, query: Example, llm: LlmClient) -> Prediction:
        labels = sorted(self.config.label_set or [])
        plan = PromptPlan()
        if self.config.instruction:
            plan.add("instruction", self.config.instruction)
        plan.add("label_primer", "Valid labels: " + ", ".join(labels))
        coverage = self._coverage(query.input_text)
        if coverage:
            block = ["One representative example per label:"]
            for example in coverage:
                block += [f"Input: {example.input_text}", f"Label: {example.label}"]
            plan.add("coverage", "\n".join(block))
        pairs = self._contrastive(query.input_text)
        if pairs:
            block = ["Similar inputs with different labels:"]
            for a, b in pairs:
                block += [
                    f"Input: {a.input_text}",
                    f"Label: {a.label}",
                    f"Input: {b.input_text}",
                    f"Label: {b.label}",
                ]
            plan.add("contrastive", "\n".join(block))
        plan.add("query", f"Input: {query.input_text}\nLabel:")
        self.last_plan = plan
        response = llm.complete((ChatMessage("user", plan.render()),))
        return Prediction(
            query.example_id,
            parse_label(response.content, self.config.label_set),
            aux={
                "plan_sections": plan.kinds(),
                "coverage_labels": [e.label for e in coverage],
                "contrastive_pairs": [[a.label, b.label] for a, b in pairs],
                "degenerate_empty_memory": len(self.memory) == 0,
            },
        )


class MathRetrievalHarness(Harness):
    """Routes the problem through the four-route retrieval policy and makes
    one call with the retrieved worked examples."""

    def __init__(
        self,
        bundle: Optional[RetrievalBundle],
        route_configs: Optional[Dict[str, RouteConfig]] = None,
        enabled: bool = True,
    ):
        if enabled and bundle is None:
            raise ValueError("math_retrieval requires a retrieval bundle")
        self.bundle = bundle
        self.route_configs = route_configs
        self.enabled = enabled
        self.config: Optional[TaskConfig] = None

    def on_init(self, config: TaskConfig) -> None:
        self.config = config

    def on_learn(self, example: Example) -> Optional[str]:
        return "memory_size=0"  # retrieval state is the frozen corpus

    def on_predict(self, query: Example, llm: LlmClient) -> Prediction:
        if self.enabled:
            result = route_retrieve(query.input_text, self.bundle, self.route_configs)
            worked = [(e.problem, e.solution) for e in result.entries]
            aux = {
                "route": result.route,
                "retrieved": [e.entry_id for e in result.entries],
                "reference": result.reference.entry_id if result.reference else None,
            }
        else:
            worked, aux = [], {"route": None, "retrieved": [], "reference": None}
        response = llm.complete(qa_messages(self.config.instruction, worked, query.input_text))
        from .evaluator import normalize_answer

        label = normalize_answer(response.content) or response.content.strip() or "(empty)"
        return Prediction(query.example_id, label, aux=aux)


# --- construction by name ---------------------------------------------------------


REFERENCE_NAMES = ("zero_shot", "few_shot", "draft_verification", "label_primed", "math_retrieval")


def make_reference_harness(spec: str, resources: Optional[HarnessResources] = None) -> Harness:
    """Build a reference harness from a name like `few_shot:8` or
    `few_shot:all`."""
    name, _, arg = spec.strip().partition(":")
    if name == "zero_shot":
        return ZeroShotHarness()
    if name == "few_shot":
        if arg in ("", "all"):
            return FewShotHarness(None)
        return FewShotHarness(int(arg))
    if name == "draft_verification":
        return DraftVerificationHarness()
    if name == "label_primed":
        return LabelPrimedHarness()
    if name == "math_retrieval":
        bundle = resources.retrieval_bundle if resources else None
        if arg == "off":
            return MathRetrievalHarness(bundle, enabled=False)
        return MathRetrievalHarness(bundle)
    raise ValueError(f"unknown reference harness {spec!r} (known: {REFERENCE_NAMES})")
