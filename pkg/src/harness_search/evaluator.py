"""Evaluation protocols: online text classification and sampled QA.

Context cost is measured against the canonical zero-shot template so that
the zero-shot harness scores exactly zero additional context. Both token
and character deltas are reported.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .backends import Backend, count_tokens, render_messages
from .errors import DuplicateId, HarnessCrashed, SchemaError
from .harness import (
    Example,
    HarnessHandle,
    HarnessResources,
    LlmClient,
    TaskConfig,
    open_handle,
)
from .pareto import MetricVector, ObjectiveSpec
from .store import DatasetScore, Run, ScoreReport, TraceEvent, utc_now

logger = logging.getLogger(__name__)

DEFAULT_QA_SAMPLES = 3
DEFAULT_FIELD_MAP = {"id": "id", "text": "text", "label": "label", "answer": "answer"}

# Objective names the evaluator knows how to aggregate.
METRIC_ACCURACY = "accuracy"
METRIC_CONTEXT_TOKENS = "context_tokens"
METRIC_CONTEXT_CHARS = "context_chars"


# --- datasets -----------------------------------------------------------------


@dataclass
class Dataset:
    dataset_id: str
    task_kind: str
    label_set: Optional[List[str]] = None
    train: List[Example] = field(default_factory=list)
    test: List[Example] = field(default_factory=list)
    instruction: str = ""
    n_samples_per_item: int = 1
    _baseline_cache: Dict[str, Tuple[int, int]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self):
        seen = set()
        for example in list(self.train) + list(self.test):
            if example.example_id in seen:
                raise DuplicateId(example.example_id)
            seen.add(example.example_id)
        if self.task_kind == "online_classification" and self.label_set:
            allowed = set(self.label_set)
            for example in list(self.train) + list(self.test):
                if example.label is not None and example.label not in allowed:
                    raise SchemaError(
                        f"label {example.label!r} of {example.example_id} not in label_set"
                    )
        if self.n_samples_per_item < 1:
            raise ValueError("n_samples_per_item must be >= 1")


def read_examples(
    path: Union[str, Path],
    fmt: Optional[str] = None,
    mapping: Optional[Dict[str, str]] = None,
    label_key: str = "label",
) -> List[Example]:
    """Read one JSONL or CSV file into examples, preserving file order."""
    path = Path(path)
    fields = dict(DEFAULT_FIELD_MAP)
    fields.update(mapping or {})
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    rows: List[dict] = []
    if fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
    elif fmt == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")

    examples: List[Example] = []
    seen = set()
    for i, row in enumerate(rows):
        id_key, text_key = fields["id"], fields["text"]
        if id_key not in row or text_key not in row:
            raise SchemaError(f"{path.name}: row {i} is missing {id_key!r} or {text_key!r}")
        example_id = str(row[id_key])
        if example_id in seen:
            raise DuplicateId(example_id)
        seen.add(example_id)
        raw_label = row.get(fields[label_key])
        examples.append(
            Example(
                example_id=example_id,
                input_text=str(row[text_key]),
                label=None if raw_label is None else str(raw_label),
            )
        )
    return examples


def load_dataset(
    dataset_id: str,
    task_kind: str,
    train_path: Optional[Union[str, Path]] = None,
    test_path: Optional[Union[str, Path]] = None,
    fmt: Optional[str] = None,
    mapping: Optional[Dict[str, str]] = None,
    label_set: Optional[List[str]] = None,
    instruction: str = "",
    n_samples_per_item: Optional[int] = None,
) -> Dataset:
    """Assemble a dataset from explicit train/test files. The label set is
    inferred as the sorted union of labels unless given explicitly."""
    label_key = "answer" if task_kind == "qa" else "label"
    train = read_examples(train_path, fmt, mapping, label_key) if train_path else []
    test = read_examples(test_path, fmt, mapping, label_key) if test_path else []
    if label_set is None and task_kind == "online_classification":
        label_set = sorted({e.label for e in train + test if e.label is not None})
    if n_samples_per_item is None:
        n_samples_per_item = DEFAULT_QA_SAMPLES if task_kind == "qa" else 1
    return Dataset(
        dataset_id=dataset_id,
        task_kind=task_kind,
        label_set=label_set,
        train=train,
        test=test,
        instruction=instruction,
        n_samples_per_item=n_samples_per_item,
    )


# --- normalization ---------------------------------------------------------------


def normalize_label(text: str) -> str:
    return text.strip().casefold()


_BOXED = "\\boxed{"


def _extract_boxed(text: str) -> Optional[str]:
    start = text.find(_BOXED)
    if start < 0:
        return None
    depth = 0
    for i in range(start + len(_BOXED) - 1, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[start + len(_BOXED) : i]
    return text[start + len(_BOXED) :]  # unbalanced; take the tail


def normalize_answer(text: str) -> str:
    """Canonical answer form: innermost boxed content if present, stripped
    of $ delimiters, whitespace-collapsed, case-folded."""
    current = text
    while True:
        inner = _extract_boxed(current)
        if inner is None:
            break
        current = inner
    current = current.strip().strip("$").strip()
    current = re.sub(r"\s+", " ", current)
    return current.casefold()


# --- context-cost baseline ----------------------------------------------------------


def baseline_prompt(dataset: Dataset, example: Example) -> str:
    """The canonical zero-cost prompt rendered for this example."""
    from .reference import classification_messages, qa_messages

    if dataset.task_kind == "qa":
        messages = qa_messages(dataset.instruction, [], example.input_text)
    else:
        messages = classification_messages(
            dataset.instruction, dataset.label_set, [], example.input_text
        )
    return render_messages(messages)


def baseline_prompt_tokens(
    dataset: Dataset, example: Example, estimator: Callable[[str], int] = count_tokens
) -> int:
    tokens, _ = _baseline_costs(dataset, example, estimator)
    return tokens


def _baseline_costs(
    dataset: Dataset, example: Example, estimator: Callable[[str], int]
) -> Tuple[int, int]:
    cached = dataset._baseline_cache.get(example.example_id)
    if cached is None:
        rendered = baseline_prompt(dataset, example)
        cached = (estimator(rendered), len(rendered))
        dataset._baseline_cache[example.example_id] = cached
    return cached


# --- results ---------------------------------------------------------------------------


@dataclass
class ExampleOutcome:
    example_id: str
    predicted: str
    gold: str
    correct: bool
    additional_context_tokens: int
    additional_context_chars: int
    sample_index: int = 0


@dataclass
class DatasetEvaluation:
    dataset_id: str
    score: DatasetScore
    per_example: List[ExampleOutcome]
    wall_clock_seconds: float


@dataclass
class EvaluationResult:
    report: ScoreReport
    per_example: Dict[str, List[ExampleOutcome]]


def _mark_crashed(run: Run, candidate_id: str) -> None:
    record = run.get_candidate(candidate_id)
    if record.status == "pending":
        run.set_status(candidate_id, "crashed")


def _note_outcome(
    run: Optional[Run], candidate_id: str, dataset_id: str, outcome: ExampleOutcome
) -> None:
    if run is None:
        return
    payload = json.dumps(
        {
            "predicted": outcome.predicted,
            "gold": outcome.gold,
            "correct": outcome.correct,
            "additional_context_tokens": outcome.additional_context_tokens,
            "sample_index": outcome.sample_index,
        },
        ensure_ascii=False,
    )
    seq = run.next_trace_seq(candidate_id, dataset_id, outcome.example_id)
    run.append_trace(
        candidate_id,
        dataset_id,
        outcome.example_id,
        TraceEvent(seq=seq, kind="note", payload=payload, timestamp=utc_now()),
    )


def _finish(
    dataset: Dataset, outcomes: List[ExampleOutcome], started: float
) -> DatasetEvaluation:
    n_total = len(outcomes)
    n_correct = sum(1 for o in outcomes if o.correct)
    score = DatasetScore(
        accuracy=n_correct / n_total,
        n_correct=n_correct,
        n_total=n_total,
        mean_additional_context_tokens=sum(o.additional_context_tokens for o in outcomes) / n_total,
        mean_additional_context_chars=sum(o.additional_context_chars for o in outcomes) / n_total,
    )
    return DatasetEvaluation(
        dataset_id=dataset.dataset_id,
        score=score,
        per_example=outcomes,
        wall_clock_seconds=time.perf_counter() - started,
    )


def _run_learn_phase(handle: HarnessHandle, dataset: Dataset) -> None:
    for example in dataset.train:
        handle.learn(example)


def evaluate_online_classification(
    run: Run,
    candidate_id: str,
    dataset: Dataset,
    backend: Backend,
    resources: Optional[HarnessResources] = None,
    trace: bool = True,
    estimator: Callable[[str], int] = count_tokens,
) -> DatasetEvaluation:
    """Deliver train examples one at a time, then predict the held-out
    examples in order. Correctness is normalized exact match."""
    if dataset.task_kind != "online_classification":
        raise ValueError(f"{dataset.dataset_id} is not an online_classification dataset")
    if not dataset.test:
        raise ValueError(f"{dataset.dataset_id}: nothing to evaluate (empty test split)")
    record = run.get_candidate(candidate_id)
    task = TaskConfig(
        "online_classification", dataset.dataset_id, dataset.label_set, dataset.instruction
    )
    started = time.perf_counter()
    outcomes: List[ExampleOutcome] = []
    trace_run = run if trace else None
    try:
        handle = open_handle(run, record, dataset.dataset_id, resources, trace=trace)
    except Exception as exc:
        _mark_crashed(run, candidate_id)
        raise HarnessCrashed(f"{candidate_id} on {dataset.dataset_id}: {exc}") from exc
    try:
        handle.init(task)
        _run_learn_phase(handle, dataset)
        for example in dataset.test:
            llm = LlmClient(
                backend,
                trace_run,
                candidate_id,
                dataset.dataset_id,
                example.example_id,
                sample_index=0,
                estimator=estimator,
            )
            prediction = handle.predict(Example(example.example_id, example.input_text), llm)
            base_tokens, base_chars = _baseline_costs(dataset, example, estimator)
            outcome = ExampleOutcome(
                example_id=example.example_id,
                predicted=prediction.label,
                gold=example.label or "",
                correct=normalize_label(prediction.label) == normalize_label(example.label or ""),
                additional_context_tokens=llm.prompt_tokens_total - base_tokens,
                additional_context_chars=llm.prompt_chars_total - base_chars,
            )
            _note_outcome(trace_run, candidate_id, dataset.dataset_id, outcome)
            outcomes.append(outcome)
    except Exception as exc:
        _mark_crashed(run, candidate_id)
        raise HarnessCrashed(f"{candidate_id} on {dataset.dataset_id}: {exc}") from exc
    finally:
        handle.shutdown()
    return _finish(dataset, outcomes, started)


def evaluate_qa(
    run: Run,
    candidate_id: str,
    dataset: Dataset,
    backend: Backend,
    resources: Optional[HarnessResources] = None,
    trace: bool = True,
    estimator: Callable[[str], int] = count_tokens,
) -> DatasetEvaluation:
    """Sampled QA: n independent samples per problem; accuracy is the mean
    over all (problem, sample) pairs with normalized answer matching."""
    if dataset.task_kind != "qa":
        raise ValueError(f"{dataset.dataset_id} is not a qa dataset")
    if not dataset.test:
        raise ValueError(f"{dataset.dataset_id}: nothing to evaluate (empty test split)")
    record = run.get_candidate(candidate_id)
    task = TaskConfig("qa", dataset.dataset_id, dataset.label_set, dataset.instruction)
    started = time.perf_counter()
    outcomes: List[ExampleOutcome] = []
    trace_run = run if trace else None
    try:
        handle = open_handle(run, record, dataset.dataset_id, resources, trace=trace)
    except Exception as exc:
        _mark_crashed(run, candidate_id)
        raise HarnessCrashed(f"{candidate_id} on {dataset.dataset_id}: {exc}") from exc
    try:
        handle.init(task)
        _run_learn_phase(handle, dataset)
        for example in dataset.test:
            for sample_index in range(dataset.n_samples_per_item):
                llm = LlmClient(
                    backend,
                    trace_run,
                    candidate_id,
                    dataset.dataset_id,
                    example.example_id,
                    sample_index=sample_index,
                    estimator=estimator,
                )
                prediction = handle.predict(Example(example.example_id, example.input_text), llm)
                base_tokens, base_chars = _baseline_costs(dataset, example, estimator)
                outcome = ExampleOutcome(
                    example_id=example.example_id,
                    predicted=prediction.label,
                    gold=example.label or "",
                    correct=normalize_answer(prediction.label)
                    == normalize_answer(example.label or ""),
                    additional_context_tokens=llm.prompt_tokens_total - base_tokens,
                    additional_context_chars=llm.prompt_chars_total - base_chars,
                    sample_index=sample_index,
                )
                _note_outcome(trace_run, candidate_id, dataset.dataset_id, outcome)
                outcomes.append(outcome)
    except Exception as exc:
        _mark_crashed(run, candidate_id)
        raise HarnessCrashed(f"{candidate_id} on {dataset.dataset_id}: {exc}") from exc
    finally:
        handle.shutdown()
    return _finish(dataset, outcomes, started)


def evaluate_dataset(
    run: Run,
    candidate_id: str,
    dataset: Dataset,
    backend: Backend,
    resources: Optional[HarnessResources] = None,
    trace: bool = True,
    estimator: Callable[[str], int] = count_tokens,
) -> DatasetEvaluation:
    fn = evaluate_qa if dataset.task_kind == "qa" else evaluate_online_classification
    return fn(run, candidate_id, dataset, backend, resources, trace, estimator)


def aggregate_metrics(
    objectives: Sequence[ObjectiveSpec], per_dataset: Dict[str, DatasetScore]
) -> MetricVector:
    """Unweighted means across datasets for each declared objective."""
    n = len(per_dataset)
    if n == 0:
        raise ValueError("no dataset scores to aggregate")
    values: Dict[str, float] = {}
    for objective in objectives:
        if objective.name == METRIC_ACCURACY:
            values[objective.name] = sum(s.accuracy for s in per_dataset.values()) / n
        elif objective.name == METRIC_CONTEXT_TOKENS:
            values[objective.name] = (
                sum(s.mean_additional_context_tokens for s in per_dataset.values()) / n
            )
        elif objective.name == METRIC_CONTEXT_CHARS:
            values[objective.name] = (
                sum(s.mean_additional_context_chars for s in per_dataset.values()) / n
            )
        else:
            raise ValueError(f"cannot compute objective {objective.name!r}")
    return MetricVector(values)


def evaluate_candidate(
    run: Run,
    candidate_id: str,
    datasets: Sequence[Dataset],
    backend: Backend,
    objectives: Optional[Sequence[ObjectiveSpec]] = None,
    resources: Optional[HarnessResources] = None,
    trace: bool = True,
    estimator: Callable[[str], int] = count_tokens,
) -> EvaluationResult:
    """Evaluate one candidate across datasets; one fresh harness per
    (candidate, dataset). Does not write scores; callers decide that."""
    if not datasets:
        raise ValueError("evaluate_candidate needs at least one dataset")
    objectives = objectives if objectives is not None else run.manifest.objectives
    started = time.perf_counter()
    per_dataset: Dict[str, DatasetScore] = {}
    per_example: Dict[str, List[ExampleOutcome]] = {}
    for dataset in datasets:
        evaluation = evaluate_dataset(
            run, candidate_id, dataset, backend, resources, trace, estimator
        )
        per_dataset[dataset.dataset_id] = evaluation.score
        per_example[dataset.dataset_id] = evaluation.per_example
    report = ScoreReport(
        per_dataset=per_dataset,
        aggregate=aggregate_metrics(objectives, per_dataset),
        wall_clock_seconds=time.perf_counter() - started,
    )
    return EvaluationResult(report=report, per_example=per_example)
