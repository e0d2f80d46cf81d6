import json
import sys
from pathlib import Path

import pytest

from harness_search.cli import main

from .conftest import FIXTURES
from .test_search import builtin_proposals, fill_queue, write_dataset_files

SEED_DATA = Path("src/harness_search/data/seeds").resolve()
FIXTURE_CORPUS = Path("src/harness_search/data/fixture_corpus.jsonl").resolve()


def write_config(tmp_path, iterations=1, k=1) -> Path:
    train, search_set = write_dataset_files(tmp_path / "data")
    queue = tmp_path / "queue"
    fill_queue(queue, builtin_proposals(iterations * k))
    config = f"""
run_id = "cli-test"

[[objectives]]
name = "accuracy"
direction = "maximize"

[[objectives]]
name = "context_tokens"
direction = "minimize"

[search]
iterations = {iterations}
candidates_per_iteration = {k}

[[seeds]]
name = "zero_shot"
dir = "{SEED_DATA / 'zero_shot'}"

[[seeds]]
name = "few_shot_8"
dir = "{SEED_DATA / 'few_shot_8'}"

[[datasets]]
id = "toy"
kind = "online_classification"
train_file = "{train}"
eval_file = "{search_set}"
instruction = "Assign one label to the input."

[backend]
kind = "mock"
default_output = "alpha"
[[backend.rules]]
pattern = "probe-alpha"
output = "alpha"
[[backend.rules]]
pattern = "probe-beta"
output = "beta"

[proposer]
command = ["{sys.executable}", "{FIXTURES / 'scripted_proposer.py'}", "--queue", "{queue}", "{{DROP_DIR}}", "{{K}}"]
timeout_s = 60

[validation]
instruction = "Assign one label to the input."
label_set = ["alpha", "beta"]
timeout_s = 10
[[validation.examples]]
id = "s1"
text = "probe-alpha text"
label = "alpha"
[validation.query]
id = "sq"
text = "query probe-alpha"
[[validation.rules]]
pattern = "probe-alpha"
output = "alpha"
"""
    path = tmp_path / "config.toml"
    path.write_text(config, encoding="utf-8")
    return path


@pytest.fixture
def cli_env(tmp_path):
    config = write_config(tmp_path)
    run_dir = tmp_path / "run"
    assert main(["init", "--run", str(run_dir), "--config", str(config)]) == 0
    return run_dir, config


class TestInitAndSearch:
    def test_init_creates_layout(self, cli_env):
        run_dir, _ = cli_env
        assert (run_dir / "run.json").is_file()
        snapshot = json.loads((run_dir / "run.json").read_text())
        assert snapshot["run_id"] == "cli-test"
        assert snapshot["search_config_snapshot"]["run_id"] == "cli-test"

    def test_search_uses_snapshot_config(self, cli_env, capsys):
        run_dir, _ = cli_env
        assert main(["search", "--run", str(run_dir)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("candidate_id,accuracy,context_tokens")
        assert "c000" in out

    def test_frontier_idempotent(self, cli_env, capsys):
        run_dir, _ = cli_env
        main(["search", "--run", str(run_dir)])
        capsys.readouterr()
        main(["frontier", "--run", str(run_dir)])
        first = capsys.readouterr().out
        main(["frontier", "--run", str(run_dir)])
        second = capsys.readouterr().out
        assert first == second


class TestStoreCommands:
    def test_seed_validate_eval(self, cli_env, capsys):
        run_dir, config = cli_env
        assert main(["seed", "--run", str(run_dir)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out == ["c0001_zero_shot", "c0002_few_shot_8"]

        assert main(["validate", "--run", str(run_dir), "c0001_zero_shot"]) == 0
        assert capsys.readouterr().out.strip() == "pass"

        assert main(["eval", "--run", str(run_dir), "c0001_zero_shot"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("candidate_id,")

    def test_top_and_diff_and_report(self, cli_env, capsys):
        run_dir, _ = cli_env
        main(["search", "--run", str(run_dir)])
        capsys.readouterr()

        assert main(["top", "--run", str(run_dir), "--k", "1", "--by", "accuracy"]) == 0
        top_out = capsys.readouterr().out.splitlines()
        assert len(top_out) == 2

        assert main(["diff", "--run", str(run_dir), "c0001_zero_shot", "c0001_zero_shot"]) == 0
        diff_out = capsys.readouterr().out
        assert "(identical)" in diff_out

        assert main(["report", "--run", str(run_dir)]) == 0
        report_out = capsys.readouterr().out
        assert "candidate_id,accuracy,context_tokens" in report_out
        assert "iteration,best_so_far" in report_out

    def test_unknown_candidate_exit_1(self, cli_env, capsys):
        run_dir, _ = cli_env
        assert main(["diff", "--run", str(run_dir), "c0404_none", "c0404_none"]) == 1
        assert "error" in capsys.readouterr().err

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["frontier"])  # missing --run
        assert excinfo.value.code == 2


class TestCorpusCommands:
    def test_ingest_and_query(self, tmp_path, capsys):
        out_file = tmp_path / "corpus.jsonl"
        assert main(["corpus", "ingest", str(FIXTURE_CORPUS), "--out", str(out_file)]) == 0
        capsys.readouterr()
        problem_file = tmp_path / "problem.txt"
        problem_file.write_text("In triangle ABC find the incircle radius.", encoding="utf-8")
        assert main(["corpus", "query", "--corpus", str(out_file), "--problem", str(problem_file)]) == 0
        lines = capsys.readouterr().out.splitlines()
        header = json.loads(lines[0])
        assert header["route"] == "geometry"
        assert len(lines) == 1 + header["n"]

    def test_decontaminate(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        rows = [
            {"id": "keep", "problem": "A fresh question about ducks and ponds.", "solution": "s"},
            {"id": "leak", "problem": "What is the sum of the first ten squares?", "solution": "s"},
        ]
        corpus.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        eval_file = tmp_path / "eval.jsonl"
        eval_file.write_text(
            json.dumps({"problem": "What is the sum of the first ten squares?"}) + "\n",
            encoding="utf-8",
        )
        out = tmp_path / "clean.jsonl"
        assert (
            main(
                [
                    "corpus",
                    "decontaminate",
                    "--corpus",
                    str(corpus),
                    "--eval",
                    str(eval_file),
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        removed = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
        assert [r["entry_id"] for r in removed] == ["leak"]
        kept = [json.loads(l)["id"] for l in out.read_text().splitlines()]
        assert kept == ["keep"]


def test_console_script_installed():
    import subprocess

    result = subprocess.run(["hsearch", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    assert "frontier" in result.stdout
