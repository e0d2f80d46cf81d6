#!/usr/bin/env python3
# The reference harnesses, run directly against a deterministic mock
# backend: zero-shot, few-shot, draft-verification, and label-primed.

from harness_search import LlmClient, MockBackend, MockRule, TaskConfig
from harness_search.harness import Example
from harness_search.reference import make_reference_harness

task = TaskConfig(
    task_kind="online_classification",
    dataset_id="demo",
    label_set=["billing", "shipping", "returns"],
    instruction="Route the customer message to a queue.",
)

memory = [
    Example("m1", "my invoice lists the wrong amount", "billing"),
    Example("m2", "the parcel tracking page is stuck", "shipping"),
    Example("m3", "I want to send this jacket back", "returns"),
    Example("m4", "card was charged twice this month", "billing"),
    Example("m5", "the courier never rang the bell", "shipping"),
    Example("m6", "requesting a refund label please", "returns"),
]

query = Example("q1", "my package seems lost in transit")

# The mock backend answers by substring rules over the final user message,
# which keeps every demo below fully deterministic.
def backend():
    return MockBackend(
        rules=[MockRule("lost in transit", "shipping")],
        default_output="shipping",
    )

for spec in ("zero_shot", "few_shot:4", "draft_verification", "label_primed"):
    harness = make_reference_harness(spec)
    harness.on_init(task)
    for example in memory:
        harness.on_learn(example)
    llm = LlmClient(backend())
    prediction = harness.on_predict(query, llm)
    print(f"{spec:20s} calls={llm.call_count}  label={prediction.label}")
    if prediction.aux:
        print(f"{'':20s} aux={prediction.aux}")

# The prompts themselves are plain text; peek at what label_primed sends.
harness = make_reference_harness("label_primed")
harness.on_init(task)
for example in memory:
    harness.on_learn(example)
mock = backend()
harness.on_predict(query, LlmClient(mock))
print("\n--- label_primed prompt ---")
print(mock.call_log[-1].messages[0].content)
