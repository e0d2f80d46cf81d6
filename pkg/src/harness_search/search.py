"""The outer loop: seed the population, then iterate proposer invocation,
validation, evaluation, and logging; return the Pareto frontier.

The loop's only feedback channel is the run directory itself: the proposer
command reads the store and drops candidate directories. Test splits are
never loaded here; search configs reference search-set files only.
"""

from __future__ import annotations

import json
import logging
import os
import subprocess
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .backends import Backend, MockBackend, make_backend
from .config import SearchConfig
from .errors import EmptyCandidate, HarnessCrashed, ProposerFailed, SeedFailure, UnknownParent
from .evaluator import Dataset, evaluate_candidate, load_dataset
from .harness import HarnessResources, validate_candidate
from .pareto import MetricVector, pareto_frontier
from .retrieval import build_retrieval_bundle, ingest_corpus
from .store import CandidateRecord, Run, read_source_dir, slugify, utc_now

logger = logging.getLogger(__name__)

ITERATIONS_LOG = "iterations.jsonl"

PLACEHOLDERS = ("STORE_DIR", "DROP_DIR", "SKILL_PATH", "K", "ITERATION")


# --- iteration bookkeeping -------------------------------------------------------


def _completed_iterations(run: Run) -> Dict[int, str]:
    path = run.root / ITERATIONS_LOG
    done: Dict[int, str] = {}
    if not path.is_file():
        return done
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            continue  # truncated final line from a crash
        done[int(doc["iteration"])] = doc.get("status", "completed")
    return done


def _log_iteration(run: Run, iteration: int, status: str, candidate_ids: Sequence[str]) -> None:
    path = run.root / ITERATIONS_LOG
    doc = {
        "iteration": iteration,
        "status": status,
        "candidates": list(candidate_ids),
        "timestamp": utc_now(),
    }
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, ensure_ascii=False) + "\n")


# --- proposer --------------------------------------------------------------------


def invoke_proposer(config: SearchConfig, iteration: int, run: Run) -> Path:
    """Run the external proposer command; it may read the whole run
    directory and must drop candidate subdirectories into the iteration's
    proposals directory. Stdout is saved as the transcript."""
    proposer = config.proposer
    drop_dir = run.proposals_dir / f"iter_{iteration}"
    drop_dir.mkdir(parents=True, exist_ok=True)
    skill_path = proposer.skill_path or str(run.root / "skill.md")
    values = {
        "STORE_DIR": str(run.root),
        "DROP_DIR": str(drop_dir),
        "SKILL_PATH": skill_path,
        "K": str(config.candidates_per_iteration),
        "ITERATION": str(iteration),
    }
    argv = []
    for arg in proposer.command:
        for key, value in values.items():
            arg = arg.replace("{" + key + "}", value)
        argv.append(arg)
    env = dict(os.environ)
    env.update({f"MH_{key}": value for key, value in values.items()})
    try:
        result = subprocess.run(
            argv,
            env=env,
            capture_output=True,
            text=True,
            timeout=proposer.timeout_s,
        )
    except subprocess.TimeoutExpired as exc:
        (drop_dir / "proposer_transcript.txt").write_text(
            (exc.stdout or "") + "\n[timed out]\n", encoding="utf-8"
        )
        raise ProposerFailed(iteration, f"timed out after {proposer.timeout_s}s")
    except OSError as exc:
        raise ProposerFailed(iteration, f"cannot launch proposer: {exc}")
    transcript = result.stdout
    if result.stderr:
        transcript += "\n--- stderr ---\n" + result.stderr
    (drop_dir / "proposer_transcript.txt").write_text(transcript, encoding="utf-8")
    if result.returncode != 0:
        raise ProposerFailed(iteration, f"exit code {result.returncode}")
    return drop_dir


def ingest_proposals(
    run: Run, drop_dir: Path, k: int, iteration: int
) -> List[CandidateRecord]:
    """Turn dropped subdirectories into pending candidates, at most k, in
    name order. Lineage comes from an optional parents.txt."""
    records: List[CandidateRecord] = []
    subdirs = sorted(d for d in drop_dir.iterdir() if d.is_dir())
    for subdir in subdirs:
        if len(records) >= k:
            logger.info("iteration %d: ignoring extra proposal %s (k=%d)", iteration, subdir.name, k)
            continue
        sources = read_source_dir(subdir, exclude=("parents.txt", "note.txt"))
        if not sources:
            logger.info("iteration %d: skipping empty proposal %s", iteration, subdir.name)
            continue
        parents: List[str] = []
        parents_file = subdir / "parents.txt"
        if parents_file.is_file():
            parents = [l.strip() for l in parents_file.read_text(encoding="utf-8").splitlines() if l.strip()]
        note = None
        note_file = subdir / "note.txt"
        if note_file.is_file():
            note = note_file.read_text(encoding="utf-8")
        entry = None
        entry_file = subdir / "entry.txt"
        if entry_file.is_file():
            entry = [l.strip() for l in entry_file.read_text(encoding="utf-8").splitlines() if l.strip()]
        try:
            record = run.create_candidate(
                origin="proposed",
                parents=parents,
                sources=sources,
                note=note,
                name=subdir.name,
                iteration=iteration,
                entry=entry,
            )
        except (UnknownParent, EmptyCandidate) as exc:
            logger.warning("iteration %d: skipping %s: %s", iteration, subdir.name, exc)
            continue
        records.append(record)
    return records


# --- the loop ---------------------------------------------------------------------


def load_datasets(config: SearchConfig) -> List[Dataset]:
    return [
        load_dataset(
            dataset_id=d.dataset_id,
            task_kind=d.task_kind,
            train_path=d.train_file,
            test_path=d.eval_file,
            mapping=d.mapping,
            label_set=d.label_set,
            instruction=d.instruction,
            n_samples_per_item=d.n_samples_per_item,
        )
        for d in config.datasets
    ]


def build_resources(config: SearchConfig) -> HarnessResources:
    if config.retrieval and config.retrieval.corpus_files:
        corpus = ingest_corpus(config.retrieval.corpus_files)
        bundle = build_retrieval_bundle(corpus, params=config.retrieval.params())
        return HarnessResources(retrieval_bundle=bundle)
    return HarnessResources()


def gate_backend(config: SearchConfig) -> Backend:
    validation = config.validation
    return MockBackend(validation.mock_rules, validation.mock_output())


def _has_traces(run: Run, candidate_id: str) -> bool:
    trace_dir = run.trace_dir(candidate_id)
    return trace_dir.is_dir() and any(trace_dir.iterdir())


def _sweep_stale_candidates(run: Run) -> None:
    """After an interrupted run, pending proposals (and half-evaluated
    seeds) cannot be resumed mid-trace; mark them crashed."""
    for record in run.list_candidates(status="pending"):
        if record.origin == "proposed" or _has_traces(run, record.candidate_id):
            run.set_status(record.candidate_id, "crashed", "interrupted before evaluation finished")


def _candidate_slug(candidate_id: str) -> str:
    return candidate_id.split("_", 1)[1] if "_" in candidate_id else candidate_id


def _ensure_seeds(
    run: Run,
    config: SearchConfig,
    datasets: List[Dataset],
    backend: Backend,
    resources: HarnessResources,
) -> None:
    for name, source_dir in config.seeds:
        slug = slugify(name)
        existing = [
            r
            for r in run.list_candidates(origin="seed")
            if _candidate_slug(r.candidate_id) == slug
        ]
        if any(r.status == "evaluated" for r in existing):
            continue
        pending = next((r for r in existing if r.status == "pending"), None)
        if pending is None:
            sources = read_source_dir(source_dir)
            if not sources:
                raise SeedFailure(f"seed {name!r}: no source files in {source_dir}")
            pending = run.create_candidate(
                origin="seed", parents=[], sources=sources, name=name, iteration=0
            )
        try:
            result = evaluate_candidate(
                run, pending.candidate_id, datasets, backend, config.objectives, resources
            )
        except HarnessCrashed as exc:
            raise SeedFailure(f"seed {name!r} failed to evaluate: {exc}") from exc
        run.write_scores(pending.candidate_id, result.report)
        logger.info("seed %s evaluated: %s", pending.candidate_id, dict(result.report.aggregate.values))


def run_search(
    run: Run,
    config: SearchConfig,
    backend: Optional[Backend] = None,
    halt_after_iteration: Optional[int] = None,
) -> List[Tuple[CandidateRecord, MetricVector]]:
    """Execute the full search and return the Pareto frontier over every
    evaluated candidate.

    Safe to re-run after an interruption: completed iterations are skipped
    (the iteration log is the authority) and the frontier is recomputed
    over everything on disk. `halt_after_iteration` stops the loop after
    that iteration completes, which is how controlled shutdown is tested.
    """
    config.validate_for_search()
    datasets = load_datasets(config)
    resources = build_resources(config)
    if backend is None:
        backend = make_backend(config.backend)
    smoke_backend = gate_backend(config)
    smoke = config.validation.smoke_spec()

    _sweep_stale_candidates(run)
    _ensure_seeds(run, config, datasets, backend, resources)

    done = _completed_iterations(run)
    for iteration in range(1, config.iterations + 1):
        if iteration in done:
            continue
        try:
            drop_dir = invoke_proposer(config, iteration, run)
        except ProposerFailed as exc:
            logger.warning("proposer failed: %s", exc)
            _log_iteration(run, iteration, "proposer_failed", [])
            continue
        records = ingest_proposals(run, drop_dir, config.candidates_per_iteration, iteration)
        if not records:
            _log_iteration(run, iteration, "barren", [])
            if halt_after_iteration is not None and iteration >= halt_after_iteration:
                break
            continue
        for record in records:
            verdict = validate_candidate(run, record.candidate_id, smoke, smoke_backend, resources)
            if not verdict.passed:
                continue
            try:
                result = evaluate_candidate(
                    run, record.candidate_id, datasets, backend, config.objectives, resources
                )
            except HarnessCrashed as exc:
                logger.warning("candidate crashed: %s", exc)
                continue
            run.write_scores(record.candidate_id, result.report)
        _log_iteration(run, iteration, "completed", [r.candidate_id for r in records])
        if halt_after_iteration is not None and iteration >= halt_after_iteration:
            break

    frontier = pareto_frontier(run.evaluated_points(), config.objectives)
    return [(run.get_candidate(cid), metrics) for cid, metrics in frontier]
