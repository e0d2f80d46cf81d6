import json
import sys
from pathlib import Path

import pytest

from harness_search.backends import BackendConfig, MockRule
from harness_search.config import (
    DatasetConfig,
    ProposerConfig,
    SearchConfig,
    ValidationConfig,
)
from harness_search.errors import SeedFailure
from harness_search.pareto import ObjectiveSpec, best_so_far_series
from harness_search.search import ingest_proposals, run_search
from harness_search.store import init_run

from .conftest import FIXTURES, make_manifest

OBJECTIVES = [ObjectiveSpec("accuracy", "maximize"), ObjectiveSpec("context_tokens", "minimize")]

SEED_DATA = Path("src/harness_search/data/seeds").resolve()


def write_dataset_files(root: Path, n_train=20, n_eval=10):
    labels = ["alpha", "beta"]
    root.mkdir(parents=True, exist_ok=True)
    train = root / "train.jsonl"
    with train.open("w", encoding="utf-8") as fh:
        for i in range(n_train):
            fh.write(
                json.dumps(
                    {"id": f"tr{i}", "text": f"sample {i} mentions {labels[i % 2]} things", "label": labels[i % 2]}
                )
                + "\n"
            )
    search_set = root / "search.jsonl"
    with search_set.open("w", encoding="utf-8") as fh:
        for i in range(n_eval):
            fh.write(
                json.dumps(
                    {
                        "id": f"se{i}",
                        "text": f"held out {i} mentions probe-{labels[i % 2]} things",
                        "label": labels[i % 2],
                    }
                )
                + "\n"
            )
    return train, search_set


def fill_queue(queue: Path, specs):
    """specs: sequence of (dir name, {filename: text})."""
    queue.mkdir(parents=True, exist_ok=True)
    for name, files in specs:
        d = queue / name
        d.mkdir()
        for filename, text in files.items():
            (d / filename).write_text(text, encoding="utf-8")


def builtin_proposals(count, start=0):
    # distinct but always-valid variants
    sizes = [2, 3, 4, 5, 6, 7]
    return [
        (f"p{start + i:03d}_fs{sizes[i % len(sizes)]}", {"builtin.txt": f"few_shot:{sizes[i % len(sizes)]}\n"})
        for i in range(count)
    ]


def make_config(tmp_path, iterations, k, seeds=None, queue_specs=(), run_id="search-test"):
    train, search_set = write_dataset_files(tmp_path / "data")
    queue = tmp_path / "queue"
    fill_queue(queue, queue_specs)
    seeds = seeds or [("zero_shot", str(SEED_DATA / "zero_shot")), ("few_shot_8", str(SEED_DATA / "few_shot_8"))]
    return SearchConfig(
        run_id=run_id,
        objectives=list(OBJECTIVES),
        iterations=iterations,
        candidates_per_iteration=k,
        seeds=seeds,
        datasets=[
            DatasetConfig(
                dataset_id="toy",
                task_kind="online_classification",
                train_file=str(train),
                eval_file=str(search_set),
                instruction="Assign one label to the input.",
            )
        ],
        backend=BackendConfig(
            kind="mock",
            rule_table=[MockRule("probe-alpha", "alpha"), MockRule("probe-beta", "beta")],
            default_output="alpha",
        ),
        proposer=ProposerConfig(
            command=[
                sys.executable,
                str(FIXTURES / "scripted_proposer.py"),
                "--queue",
                str(queue),
                "{DROP_DIR}",
                "{K}",
            ],
            timeout_s=60.0,
        ),
        validation=ValidationConfig(
            instruction="Assign one label to the input.",
            label_set=["alpha", "beta"],
            examples=[("s1", "probe-alpha text", "alpha"), ("s2", "probe-beta text", "beta")],
            query_id="sq",
            query_text="query probe-alpha",
            timeout_s=10.0,
            mock_rules=[MockRule("probe-alpha", "alpha"), MockRule("probe-beta", "beta")],
        ),
    )


def make_run(tmp_path, name="run"):
    return init_run(tmp_path / name, make_manifest(objectives=OBJECTIVES))


class TestSeedsOnly:
    def test_zero_iterations_frontier_over_seeds(self, tmp_path):
        config = make_config(tmp_path, iterations=0, k=1)
        run = make_run(tmp_path)
        frontier = run_search(run, config)
        evaluated = run.list_candidates(status="evaluated")
        assert len(evaluated) == 2
        assert {rec.origin for rec in evaluated} == {"seed"}
        assert 1 <= len(frontier) <= 2

    def test_seed_failure_aborts(self, tmp_path):
        config = make_config(
            tmp_path,
            iterations=0,
            k=1,
            seeds=[("mathless", str(SEED_DATA / "math_retrieval"))],  # no corpus configured
        )
        run = make_run(tmp_path)
        with pytest.raises(SeedFailure):
            run_search(run, config)


class TestLoop:
    def test_full_budget(self, tmp_path):
        n, k = 3, 2
        config = make_config(tmp_path, n, k, queue_specs=builtin_proposals(n * k))
        run = make_run(tmp_path)
        run_search(run, config)
        evaluated = run.list_candidates(status="evaluated")
        assert len(evaluated) == 2 + n * k  # seeds + every proposal

    def test_invalid_proposal_marked(self, tmp_path):
        queue = builtin_proposals(1) + [("p999_bad", {"harness.py": "this is not python at all ('"})]
        config = make_config(tmp_path, iterations=1, k=2, queue_specs=queue)
        run = make_run(tmp_path)
        run_search(run, config)
        statuses = {r.candidate_id: r.status for r in run.list_candidates(origin="proposed")}
        assert sorted(statuses.values()) == ["evaluated", "validation_failed"]

    def test_excess_proposals_capped(self, tmp_path):
        config = make_config(tmp_path, iterations=1, k=2, queue_specs=builtin_proposals(5))
        run = make_run(tmp_path)
        run_search(run, config)
        # queue holds 5 but the proposer only moves k=2 per invocation
        assert len(run.list_candidates(origin="proposed")) == 2

    def test_ingest_caps_at_k(self, tmp_path):
        run = make_run(tmp_path)
        drop = run.proposals_dir / "iter_1"
        fill_queue(drop, builtin_proposals(3))
        records = ingest_proposals(run, drop, k=2, iteration=1)
        assert [r.candidate_id.split("_", 1)[1] for r in records] == ["p000_fs2", "p001_fs3"]

    def test_ingest_skips_empty_subdir(self, tmp_path):
        run = make_run(tmp_path)
        drop = run.proposals_dir / "iter_1"
        drop.mkdir(parents=True)
        (drop / "empty_one").mkdir()
        records = ingest_proposals(run, drop, k=2, iteration=1)
        assert records == []

    def test_parents_and_note_ingested(self, tmp_path):
        config = make_config(tmp_path, iterations=0, k=1)
        run = make_run(tmp_path)
        run_search(run, config)
        seed_id = run.list_candidates(origin="seed")[0].candidate_id
        drop = run.proposals_dir / "iter_1"
        fill_queue(
            drop,
            [
                (
                    "child",
                    {
                        "builtin.txt": "few_shot:4\n",
                        "parents.txt": seed_id + "\n",
                        "note.txt": "windowed variant\n",
                    },
                )
            ],
        )
        record = ingest_proposals(run, drop, k=1, iteration=1)[0]
        assert record.parent_ids == [seed_id]
        assert record.proposer_note == "windowed variant\n"
        assert record.iteration == 1
        source_names = [p for p, _ in record.source_files]
        assert "parents.txt" not in source_names and "note.txt" not in source_names

    def test_barren_iteration_continues(self, tmp_path):
        config = make_config(tmp_path, iterations=2, k=2, queue_specs=[])
        run = make_run(tmp_path)
        run_search(run, config)
        log = (run.root / "iterations.jsonl").read_text().splitlines()
        assert len(log) == 2
        assert all(json.loads(l)["status"] == "barren" for l in log)

    def test_proposer_failure_logged_and_loop_continues(self, tmp_path):
        config = make_config(tmp_path, iterations=2, k=1, queue_specs=builtin_proposals(2))
        config.proposer.command = [sys.executable, "-c", "import sys; sys.exit(2)"]
        run = make_run(tmp_path)
        run_search(run, config)
        log = [json.loads(l) for l in (run.root / "iterations.jsonl").read_text().splitlines()]
        assert [e["status"] for e in log] == ["proposer_failed", "proposer_failed"]

    def test_proposer_receives_env_vars(self, tmp_path):
        # a proposer that navigates purely via the MH_* environment
        env_proposer = (
            "import json, os, pathlib\n"
            "for key in ('MH_STORE_DIR', 'MH_DROP_DIR', 'MH_SKILL_PATH', 'MH_K', 'MH_ITERATION'):\n"
            "    assert os.environ[key], key\n"
            "assert pathlib.Path(os.environ['MH_STORE_DIR'], 'run.json').is_file()\n"
            "assert os.environ['MH_ITERATION'] == '1' and os.environ['MH_K'] == '1'\n"
            "drop = pathlib.Path(os.environ['MH_DROP_DIR']) / 'env_child'\n"
            "drop.mkdir()\n"
            "(drop / 'builtin.txt').write_text('few_shot:4\\n')\n"
        )
        config = make_config(tmp_path, iterations=1, k=1)
        config.proposer.command = [sys.executable, "-c", env_proposer]
        run = make_run(tmp_path)
        run_search(run, config)
        proposed = run.list_candidates(origin="proposed")
        assert len(proposed) == 1 and proposed[0].status == "evaluated"

    def test_best_so_far_is_monotone(self, tmp_path):
        config = make_config(tmp_path, iterations=3, k=2, queue_specs=builtin_proposals(6))
        run = make_run(tmp_path)
        run_search(run, config)
        accs = [mv.values["accuracy"] for _, mv in run.evaluated_points()]
        series = best_so_far_series(accs, "maximize")
        assert all(b >= a for a, b in zip(series, series[1:]))


class TestResumability:
    def test_halt_and_resume_matches_uninterrupted(self, tmp_path):
        n, k = 4, 1
        specs = builtin_proposals(n * k)

        config_a = make_config(tmp_path / "a", n, k, queue_specs=specs, run_id="interrupted")
        run_a = make_run(tmp_path / "a")
        run_search(run_a, config_a, halt_after_iteration=2)
        assert len(_completed(run_a)) == 2
        frontier_a = run_search(run_a, config_a)  # resume

        config_b = make_config(tmp_path / "b", n, k, queue_specs=specs, run_id="uninterrupted")
        run_b = make_run(tmp_path / "b")
        frontier_b = run_search(run_b, config_b)

        assert len(_completed(run_a)) == len(_completed(run_b)) == n
        key = lambda frontier: sorted(
            (rec.candidate_id.split("_", 1)[1], tuple(sorted(mv.values.items())))
            for rec, mv in frontier
        )
        assert key(frontier_a) == key(frontier_b)

    def test_no_duplicate_seed_evaluation_on_resume(self, tmp_path):
        config = make_config(tmp_path, iterations=2, k=1, queue_specs=builtin_proposals(2))
        run = make_run(tmp_path)
        run_search(run, config, halt_after_iteration=1)
        run_search(run, config)
        seeds = run.list_candidates(origin="seed")
        assert len(seeds) == 2  # not re-created on resume


def _completed(run):
    path = run.root / "iterations.jsonl"
    if not path.is_file():
        return []
    return [json.loads(l) for l in path.read_text().splitlines() if l.strip()]
