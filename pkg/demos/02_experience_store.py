#!/usr/bin/env python3
# The experience store: an append-only run directory holding candidate
# sources, scores, and execution traces, all navigable with grep/cat.

import tempfile
from pathlib import Path

from harness_search import (
    MetricVector,
    ObjectiveSpec,
    RunManifest,
    ScoreReport,
    TraceEvent,
    init_run,
    load_run,
)
from harness_search.store import DatasetScore, utc_now

workdir = Path(tempfile.mkdtemp(prefix="store-demo-"))

manifest = RunManifest(
    run_id="demo-store",
    created_at=utc_now(),
    objectives=[ObjectiveSpec("accuracy", "maximize"), ObjectiveSpec("context_tokens", "minimize")],
    datasets=["toy"],
)
run = init_run(workdir / "run", manifest)
print("run root:", run.root)

# Candidates get monotone, zero-padded ids so `ls` shows creation order.
seed = run.create_candidate(
    origin="seed",
    parents=[],
    sources=[("builtin.txt", b"few_shot:8\n")],
    name="few shot 8",
)
child = run.create_candidate(
    origin="proposed",
    parents=[seed.candidate_id],
    sources=[("builtin.txt", b"few_shot:32\n")],
    name="wider window",
    note="try a larger example window",
    iteration=1,
)
print("created:", seed.candidate_id, "and", child.candidate_id)

# Scores are written once; afterwards the report is immutable.
report = ScoreReport(
    per_dataset={"toy": DatasetScore(0.75, 3, 4, 120.0, 480.0)},
    aggregate=MetricVector({"accuracy": 0.75, "context_tokens": 120.0}),
    wall_clock_seconds=1.2,
)
run.write_scores(seed.candidate_id, report)

# Traces are JSON lines, one file per (dataset, example), one event per line.
for seq, (kind, payload, tokens) in enumerate(
    [
        ("prompt", "user: classify this", 5),
        ("model_output", "label_a", 2),
        ("note", '{"correct": true}', None),
    ]
):
    run.append_trace(
        seed.candidate_id,
        "toy",
        "example_1",
        TraceEvent(seq=seq, kind=kind, payload=payload, token_count=tokens, timestamp=utc_now()),
    )
print("\ntrace file:", run.trace_path(seed.candidate_id, "toy", "example_1"))
print(run.trace_path(seed.candidate_id, "toy", "example_1").read_text().strip())

# Everything reloads from disk alone; no in-memory state is required.
reloaded = load_run(run.root)
print("\nreloaded candidates:", [c.candidate_id for c in reloaded.list_candidates()])
print("evaluated points:", reloaded.evaluated_points())

# Human-readable diffs between any two candidates.
print("\n" + reloaded.diff_candidates(seed.candidate_id, child.candidate_id))
