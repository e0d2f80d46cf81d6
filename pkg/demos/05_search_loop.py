#!/usr/bin/env python3
# A complete miniature search run: seeds, a scripted proposer that drops
# queued candidates, validation, evaluation, and the final frontier.
#
# The proposer here is a fixture that pops pre-made candidate directories
# from a queue; in a real deployment the command would launch a coding
# agent pointed at the run directory (see README).

import json
import sys
import tempfile
from pathlib import Path

from harness_search import ObjectiveSpec, RunManifest, init_run
from harness_search.backends import BackendConfig, MockRule
from harness_search.config import DatasetConfig, ProposerConfig, SearchConfig, ValidationConfig
from harness_search.search import run_search
from harness_search.store import utc_now

workdir = Path(tempfile.mkdtemp(prefix="search-demo-"))
print("working in", workdir)

# -- a tiny online-classification task: label from a keyword ----------------
labels = ["urgent", "routine"]
train_file = workdir / "train.jsonl"
search_file = workdir / "search.jsonl"
with train_file.open("w") as fh:
    for i in range(12):
        label = labels[i % 2]
        fh.write(json.dumps({"id": f"tr{i}", "text": f"ticket {i} is {label} priority", "label": label}) + "\n")
with search_file.open("w") as fh:
    for i in range(6):
        label = labels[i % 2]
        fh.write(json.dumps({"id": f"se{i}", "text": f"incoming {i} marked mark-{label}", "label": label}) + "\n")

# -- a queue of candidate directories for the scripted proposer -------------
queue = workdir / "queue"
queue.mkdir()
for i, spec in enumerate(["few_shot:2", "few_shot:4", "label_primed", "draft_verification"]):
    d = queue / f"p{i:02d}_{spec.replace(':', '_')}"
    d.mkdir()
    (d / "builtin.txt").write_text(spec + "\n")

proposer_script = workdir / "proposer.py"
proposer_script.write_text(
    """
import shutil, sys
from pathlib import Path
queue, drop, k = Path(sys.argv[1]), Path(sys.argv[2]), int(sys.argv[3])
for d in sorted(queue.iterdir())[:k]:
    shutil.move(str(d), str(drop / d.name))
    print("dropped", d.name)
"""
)

# -- seed directories: the shipped reference harnesses -----------------------
from importlib import resources

seed_root = resources.files("harness_search").joinpath("data/seeds")

config = SearchConfig(
    run_id="demo-search",
    objectives=[ObjectiveSpec("accuracy", "maximize"), ObjectiveSpec("context_tokens", "minimize")],
    iterations=4,
    candidates_per_iteration=1,
    seeds=[("zero_shot", str(seed_root / "zero_shot")), ("few_shot_8", str(seed_root / "few_shot_8"))],
    datasets=[
        DatasetConfig(
            dataset_id="tickets",
            task_kind="online_classification",
            train_file=str(train_file),
            eval_file=str(search_file),
            instruction="Classify the ticket priority.",
        )
    ],
    backend=BackendConfig(
        kind="mock",
        rule_table=[MockRule("mark-urgent", "urgent"), MockRule("mark-routine", "routine")],
        default_output="routine",
    ),
    proposer=ProposerConfig(
        command=[sys.executable, str(proposer_script), str(queue), "{DROP_DIR}", "{K}"],
        timeout_s=30.0,
    ),
    validation=ValidationConfig(
        instruction="Classify the ticket priority.",
        label_set=labels,
        examples=[("s1", "mark-urgent thing", "urgent")],
        query_id="sq",
        query_text="probe mark-urgent",
        mock_rules=[MockRule("mark-urgent", "urgent")],
    ),
)

manifest = RunManifest(
    run_id=config.run_id,
    created_at=utc_now(),
    objectives=config.objectives,
    datasets=["tickets"],
)
run = init_run(workdir / "run", manifest)
frontier = run_search(run, config)

print("\nevaluated candidates:")
for record in run.list_candidates():
    scores = run.get_scores(record.candidate_id)
    agg = dict(scores.aggregate.values) if scores else record.status
    print(f"  {record.candidate_id:28s} iter={record.iteration} {agg}")

print("\nfrontier:")
for record, metrics in frontier:
    print(f"  {record.candidate_id:28s} {dict(metrics.values)}")

print("\nbrowse the store yourself:")
print(f"  ls {run.root}/candidates")
print(f"  hsearch frontier --run {run.root}")
print(f"  hsearch diff --run {run.root} <a> <b>")
