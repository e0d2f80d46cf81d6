import sys
from pathlib import Path

import pytest

from harness_search.backends import MockBackend, MockRule
from harness_search.evaluator import Dataset
from harness_search.harness import Example
from harness_search.pareto import ObjectiveSpec
from harness_search.store import RunManifest, init_run, utc_now

FIXTURES = Path(__file__).parent / "fixtures"

DEFAULT_OBJECTIVES = [
    ObjectiveSpec("accuracy", "maximize"),
    ObjectiveSpec("context_tokens", "minimize"),
]


def make_manifest(run_id="test-run", objectives=None, datasets=("toy",)):
    return RunManifest(
        run_id=run_id,
        created_at=utc_now(),
        objectives=list(objectives or DEFAULT_OBJECTIVES),
        datasets=list(datasets),
    )


@pytest.fixture
def run(tmp_path):
    return init_run(tmp_path / "run", make_manifest())


def seed_candidate(run, name="zero_shot", builtin="zero_shot", origin="seed", **kwargs):
    """Create a candidate whose harness is a shipped reference harness."""
    return run.create_candidate(
        origin=origin,
        parents=kwargs.pop("parents", []),
        sources=[("builtin.txt", (builtin + "\n").encode())],
        name=name,
        **kwargs,
    )


def script_candidate(run, script_path, name, origin="proposed", **kwargs):
    """Create a candidate that runs a Python script over the wire protocol."""
    return run.create_candidate(
        origin=origin,
        parents=kwargs.pop("parents", []),
        sources=[("harness.py", Path(script_path).read_bytes())],
        name=name,
        entry=[sys.executable, "harness.py"],
        **kwargs,
    )


def toy_classification_dataset(n_train=6, n_test=4, dataset_id="toy"):
    """Tiny two-label dataset. Test inputs carry a probe-<label> marker that
    never appears in training text, so a substring mock rule classifies
    queries perfectly even when memory examples sit in the same prompt."""
    labels = ["alpha", "beta"]
    train = [
        Example(f"tr{i}", f"sample {i} mentions {labels[i % 2]} things", labels[i % 2])
        for i in range(n_train)
    ]
    test = [
        Example(f"te{i}", f"held out {i} mentions probe-{labels[i % 2]} things", labels[i % 2])
        for i in range(n_test)
    ]
    return Dataset(
        dataset_id=dataset_id,
        task_kind="online_classification",
        label_set=labels,
        train=train,
        test=test,
        instruction="Assign one label to the input.",
    )


def perfect_mock():
    return MockBackend(
        rules=[MockRule("probe-alpha", "alpha"), MockRule("probe-beta", "beta")],
        default_output="alpha",
    )
