"""Run configuration: one TOML or JSON document mirroring the search setup.

Relative paths are resolved against the config file's directory at load
time, so the snapshot stored in run.json is self-contained.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import BackendConfig, MockRule, RetryPolicy
from .harness import Example, SmokeSpec, TaskConfig
from .pareto import ObjectiveSpec
from .retrieval import Bm25Params

DEFAULT_OBJECTIVES = [
    ObjectiveSpec("accuracy", "maximize"),
    ObjectiveSpec("context_tokens", "minimize"),
]


@dataclass
class DatasetConfig:
    dataset_id: str
    task_kind: str
    train_file: Optional[str] = None
    eval_file: Optional[str] = None
    instruction: str = ""
    label_set: Optional[List[str]] = None
    n_samples_per_item: Optional[int] = None
    mapping: Optional[Dict[str, str]] = None


@dataclass
class ProposerConfig:
    command: List[str]
    timeout_s: float = 300.0
    skill_path: Optional[str] = None

    def __post_init__(self):
        if not self.command:
            raise ValueError("proposer command must be non-empty")


@dataclass
class ValidationConfig:
    instruction: str = "Classify the input."
    label_set: List[str] = field(default_factory=lambda: ["a", "b"])
    examples: List[Tuple[str, str, str]] = field(default_factory=list)  # (id, text, label)
    query_id: str = "smoke_query"
    query_text: str = "smoke"
    timeout_s: float = 30.0
    mock_rules: List[MockRule] = field(default_factory=list)
    mock_default: Optional[str] = None

    def smoke_spec(self, dataset_id: str = "smoke") -> SmokeSpec:
        task = TaskConfig("online_classification", dataset_id, list(self.label_set), self.instruction)
        return SmokeSpec(
            task=task,
            learn_examples=[Example(i, t, l) for i, t, l in self.examples],
            query=Example(self.query_id, self.query_text),
            timeout_s=self.timeout_s,
        )

    def mock_output(self) -> str:
        return self.mock_default if self.mock_default is not None else self.label_set[0]


@dataclass
class RetrievalSetup:
    corpus_files: List[str] = field(default_factory=list)
    k1: float = 1.2
    b: float = 0.75

    def params(self) -> Bm25Params:
        return Bm25Params(self.k1, self.b)


@dataclass
class SearchConfig:
    run_id: str
    objectives: List[ObjectiveSpec]
    iterations: int = 0
    candidates_per_iteration: int = 1
    seeds: List[Tuple[str, str]] = field(default_factory=list)  # (name, source dir)
    datasets: List[DatasetConfig] = field(default_factory=list)
    backend: BackendConfig = field(default_factory=lambda: BackendConfig(kind="mock"))
    proposer: Optional[ProposerConfig] = None
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    retrieval: Optional[RetrievalSetup] = None
    raw: dict = field(default_factory=dict, repr=False)

    def validate_for_search(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.candidates_per_iteration < 1:
            raise ValueError("candidates_per_iteration must be >= 1")
        if not self.seeds:
            raise ValueError("search needs at least one seed")
        if not self.datasets:
            raise ValueError("search needs at least one dataset")
        if self.iterations > 0 and self.proposer is None:
            raise ValueError("iterations > 0 requires a proposer command")


def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else (base / path).resolve())


def _backend_from_dict(doc: dict) -> BackendConfig:
    retry = doc.get("retry", {})
    return BackendConfig(
        kind=doc.get("kind", "mock"),
        endpoint_url=doc.get("endpoint_url"),
        model_name=doc.get("model_name"),
        api_key_env_var=doc.get("api_key_env_var"),
        rule_table=[
            MockRule(r["pattern"], r["output"], r.get("sample_index"))
            for r in doc.get("rules", [])
        ],
        default_output=doc.get("default_output"),
        replay_source=doc.get("replay_source"),
        max_parallel=int(doc.get("max_parallel", 4)),
        retry=RetryPolicy(
            max_attempts=int(retry.get("max_attempts", 3)),
            base_backoff_ms=int(retry.get("base_backoff_ms", 100)),
        ),
        timeout_s=float(doc.get("timeout_s", 60.0)),
        token_estimator=doc.get("token_estimator", "bytes_div_4"),
    )


def config_from_dict(doc: dict, base_dir: Path) -> SearchConfig:
    base = Path(base_dir)
    objectives = [
        ObjectiveSpec(o["name"], o["direction"]) for o in doc.get("objectives", [])
    ] or list(DEFAULT_OBJECTIVES)

    search = doc.get("search", {})
    seeds = [(s["name"], _resolve(base, s["dir"])) for s in doc.get("seeds", [])]

    datasets = [
        DatasetConfig(
            dataset_id=d["id"],
            task_kind=d.get("kind", "online_classification"),
            train_file=_resolve(base, d.get("train_file")),
            eval_file=_resolve(base, d.get("eval_file")),
            instruction=d.get("instruction", ""),
            label_set=d.get("label_set"),
            n_samples_per_item=d.get("n_samples"),
            mapping=d.get("mapping"),
        )
        for d in doc.get("datasets", [])
    ]

    proposer = None
    if "proposer" in doc:
        p = doc["proposer"]
        proposer = ProposerConfig(
            command=list(p["command"]),
            timeout_s=float(p.get("timeout_s", 300.0)),
            skill_path=_resolve(base, p.get("skill_path")),
        )

    validation = ValidationConfig()
    if "validation" in doc:
        v = doc["validation"]
        validation = ValidationConfig(
            instruction=v.get("instruction", "Classify the input."),
            label_set=list(v.get("label_set", ["a", "b"])),
            examples=[(e["id"], e["text"], e["label"]) for e in v.get("examples", [])],
            query_id=v.get("query", {}).get("id", "smoke_query"),
            query_text=v.get("query", {}).get("text", "smoke"),
            timeout_s=float(v.get("timeout_s", 30.0)),
            mock_rules=[
                MockRule(r["pattern"], r["output"], r.get("sample_index"))
                for r in v.get("rules", [])
            ],
            mock_default=v.get("mock_default"),
        )

    retrieval = None
    if "retrieval" in doc:
        r = doc["retrieval"]
        files = r.get("corpus_files") or ([r["corpus_file"]] if "corpus_file" in r else [])
        retrieval = RetrievalSetup(
            corpus_files=[_resolve(base, f) for f in files],
            k1=float(r.get("k1", 1.2)),
            b=float(r.get("b", 0.75)),
        )

    return SearchConfig(
        run_id=doc.get("run_id", "run"),
        objectives=objectives,
        iterations=int(search.get("iterations", 0)),
        candidates_per_iteration=int(search.get("candidates_per_iteration", 1)),
        seeds=seeds,
        datasets=datasets,
        backend=_backend_from_dict(doc.get("backend", {})),
        proposer=proposer,
        validation=validation,
        retrieval=retrieval,
        raw=doc,
    )


def load_config(path) -> SearchConfig:
    """Parse a TOML or JSON config file (auto-detected by extension)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
    elif path.suffix.lower() == ".toml":
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    else:
        raise ValueError(f"config must be .toml or .json, got {path.suffix!r}")
    config = config_from_dict(doc, path.parent)
    snapshot = dict(doc)
    snapshot["__base_dir__"] = str(path.parent.resolve())
    config.raw = snapshot
    return config


def config_from_snapshot(snapshot: dict) -> SearchConfig:
    """Rebuild a config from the document stored in run.json."""
    base_dir = Path(snapshot.get("__base_dir__", "."))
    config = config_from_dict(snapshot, base_dir)
    config.raw = snapshot
    return config
