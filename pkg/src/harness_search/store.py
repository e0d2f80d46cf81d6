"""Append-only filesystem store of candidate harnesses, scores, and traces.

Layout under a run root:

    run.json
    skill.md
    candidates/<candidate_id>/meta.json
    candidates/<candidate_id>/harness/<source files>
    candidates/<candidate_id>/scores.json
    candidates/<candidate_id>/traces/<dataset_id>/<example_id>.jsonl
    proposals/iter_<t>/<dropped files + proposer_transcript.txt>

Everything is UTF-8 and line-oriented so that shell tools (grep, cat, diff)
work directly on the store. Nothing here ever rewrites a score or trace
line once written; candidate status transitions are the only mutation.
"""

from __future__ import annotations

import dataclasses
import difflib
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import (
    AlreadyScored,
    EmptyCandidate,
    InvalidReport,
    RunAlreadyExists,
    RunNotFound,
    SequenceGap,
    UnknownCandidate,
    UnknownParent,
)
from .pareto import MetricVector, ObjectiveSpec

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_TOKEN_ESTIMATOR = "bytes_div_4"

RUN_ID_RE = re.compile(r"^[a-z0-9_-]+$")
CANDIDATE_ID_RE = re.compile(r"^c(\d{4,})_([a-z0-9_-]+)$")

ORIGIN_SEED = "seed"
ORIGIN_PROPOSED = "proposed"
ORIGINS = (ORIGIN_SEED, ORIGIN_PROPOSED)

STATUS_PENDING = "pending"
STATUS_VALIDATION_FAILED = "validation_failed"
STATUS_EVALUATED = "evaluated"
STATUS_CRASHED = "crashed"
STATUSES = (STATUS_PENDING, STATUS_VALIDATION_FAILED, STATUS_EVALUATED, STATUS_CRASHED)

TRACE_KINDS = ("prompt", "model_output", "state_update", "tool_call", "note")

_SKILL_PLACEHOLDER = """# Proposer skill

Describe here, for the proposer command, where to write new candidates,
how to inspect previous candidates and their execution traces, and which
files it must not modify.
"""


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9_-]+", "_", name.strip().lower()).strip("_")
    return slug or "candidate"


# --- domain types --------------------------------------------------------


@dataclass
class RunManifest:
    run_id: str
    created_at: str
    objectives: List[ObjectiveSpec]
    datasets: List[str]
    search_config_snapshot: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    token_estimator: str = DEFAULT_TOKEN_ESTIMATOR

    def validate(self) -> None:
        if not RUN_ID_RE.match(self.run_id):
            raise ValueError(f"run_id must match [a-z0-9_-]+, got {self.run_id!r}")
        if self.schema_version < 1:
            raise ValueError("schema_version must be >= 1")
        names = [o.name for o in self.objectives]
        if len(names) != len(set(names)):
            raise ValueError("objective names must be unique")

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "run_id": self.run_id,
            "created_at": self.created_at,
            "objectives": [{"name": o.name, "direction": o.direction} for o in self.objectives],
            "datasets": list(self.datasets),
            "token_estimator": self.token_estimator,
            "search_config_snapshot": self.search_config_snapshot,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RunManifest":
        return cls(
            run_id=doc["run_id"],
            created_at=doc["created_at"],
            objectives=[ObjectiveSpec(o["name"], o["direction"]) for o in doc["objectives"]],
            datasets=list(doc["datasets"]),
            search_config_snapshot=doc.get("search_config_snapshot", {}),
            schema_version=doc["schema_version"],
            token_estimator=doc.get("token_estimator", DEFAULT_TOKEN_ESTIMATOR),
        )


@dataclass
class CandidateRecord:
    candidate_id: str
    parent_ids: List[str]
    origin: str
    iteration: int
    status: str
    source_files: List[Tuple[str, int]]
    proposer_note: Optional[str]
    created_at: str
    # Subprocess launch argv relative to the harness directory; None means
    # the harness is resolved natively (builtin.txt) or by convention.
    entry: Optional[List[str]] = None
    failure_reason: Optional[str] = None

    @property
    def seq(self) -> int:
        m = CANDIDATE_ID_RE.match(self.candidate_id)
        if not m:
            raise ValueError(f"bad candidate id {self.candidate_id!r}")
        return int(m.group(1))

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "candidate_id": self.candidate_id,
            "parent_ids": list(self.parent_ids),
            "origin": self.origin,
            "iteration": self.iteration,
            "status": self.status,
            "source_files": [[p, n] for p, n in self.source_files],
            "proposer_note": self.proposer_note,
            "created_at": self.created_at,
            "entry": list(self.entry) if self.entry is not None else None,
            "failure_reason": self.failure_reason,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CandidateRecord":
        return cls(
            candidate_id=doc["candidate_id"],
            parent_ids=list(doc["parent_ids"]),
            origin=doc["origin"],
            iteration=doc["iteration"],
            status=doc["status"],
            source_files=[(p, int(n)) for p, n in doc["source_files"]],
            proposer_note=doc.get("proposer_note"),
            created_at=doc["created_at"],
            entry=list(doc["entry"]) if doc.get("entry") else None,
            failure_reason=doc.get("failure_reason"),
        )


@dataclass
class DatasetScore:
    accuracy: float
    n_correct: int
    n_total: int
    mean_additional_context_tokens: float
    mean_additional_context_chars: float = 0.0


@dataclass
class ScoreReport:
    per_dataset: Dict[str, DatasetScore]
    aggregate: MetricVector
    wall_clock_seconds: float

    def validate(self) -> None:
        if not self.per_dataset:
            raise InvalidReport("score report covers no datasets")
        for ds_id, score in self.per_dataset.items():
            if score.n_total <= 0:
                raise InvalidReport(f"{ds_id}: n_total must be positive")
            if score.accuracy != score.n_correct / score.n_total:
                raise InvalidReport(
                    f"{ds_id}: accuracy {score.accuracy!r} != "
                    f"{score.n_correct}/{score.n_total}"
                )
            if score.mean_additional_context_tokens < 0 and score.n_correct < 0:
                raise InvalidReport(f"{ds_id}: negative counts")
        if "accuracy" in self.aggregate.values:
            mean_acc = sum(s.accuracy for s in self.per_dataset.values()) / len(self.per_dataset)
            if abs(self.aggregate.values["accuracy"] - mean_acc) > 1e-9:
                raise InvalidReport(
                    f"aggregate accuracy {self.aggregate.values['accuracy']!r} is not the "
                    f"unweighted mean {mean_acc!r} of per-dataset accuracies"
                )
        if self.wall_clock_seconds < 0:
            raise InvalidReport("wall_clock_seconds must be >= 0")

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "per_dataset": {
                ds: {
                    "accuracy": s.accuracy,
                    "n_correct": s.n_correct,
                    "n_total": s.n_total,
                    "mean_additional_context_tokens": s.mean_additional_context_tokens,
                    "mean_additional_context_chars": s.mean_additional_context_chars,
                }
                for ds, s in self.per_dataset.items()
            },
            "aggregate": dict(self.aggregate.values),
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScoreReport":
        return cls(
            per_dataset={
                ds: DatasetScore(
                    accuracy=s["accuracy"],
                    n_correct=s["n_correct"],
                    n_total=s["n_total"],
                    mean_additional_context_tokens=s["mean_additional_context_tokens"],
                    mean_additional_context_chars=s.get("mean_additional_context_chars", 0.0),
                )
                for ds, s in doc["per_dataset"].items()
            },
            aggregate=MetricVector(doc["aggregate"]),
            wall_clock_seconds=doc["wall_clock_seconds"],
        )


@dataclass
class TraceEvent:
    seq: int
    kind: str
    payload: str
    token_count: Optional[int] = None
    timestamp: str = ""

    def validate(self) -> None:
        if self.seq < 0:
            raise ValueError("seq must be >= 0")
        if self.kind not in TRACE_KINDS:
            raise ValueError(f"kind must be one of {TRACE_KINDS}, got {self.kind!r}")
        if self.kind in ("prompt", "model_output") and self.token_count is None:
            raise ValueError(f"{self.kind} events require token_count")

    def to_json_line(self) -> str:
        doc = {
            "seq": self.seq,
            "kind": self.kind,
            "payload": self.payload,
            "token_count": self.token_count,
            "timestamp": self.timestamp,
        }
        return json.dumps(doc, ensure_ascii=False)


# --- run handle ----------------------------------------------------------


class Run:
    """Handle over one run directory. Shareable across threads; writes to
    the same candidate must be externally serialized."""

    def __init__(self, root: Path, manifest: RunManifest):
        self.root = Path(root)
        self.manifest = manifest
        # next seq per open trace file, keyed by (candidate, dataset, example)
        self._trace_seq: Dict[Tuple[str, str, str], int] = {}

    # -- paths ------------------------------------------------------------

    @property
    def candidates_dir(self) -> Path:
        return self.root / "candidates"

    @property
    def proposals_dir(self) -> Path:
        return self.root / "proposals"

    def candidate_dir(self, candidate_id: str) -> Path:
        return self.candidates_dir / candidate_id

    def harness_dir(self, candidate_id: str) -> Path:
        return self.candidate_dir(candidate_id) / "harness"

    def trace_path(self, candidate_id: str, dataset_id: str, example_id: str) -> Path:
        return self.candidate_dir(candidate_id) / "traces" / dataset_id / f"{example_id}.jsonl"

    # -- candidates -------------------------------------------------------

    def _candidate_ids(self) -> List[str]:
        if not self.candidates_dir.is_dir():
            return []
        ids = [p.name for p in self.candidates_dir.iterdir() if CANDIDATE_ID_RE.match(p.name)]
        return sorted(ids)

    def _next_seq(self) -> int:
        ids = self._candidate_ids()
        if not ids:
            return 1
        return 1 + max(int(CANDIDATE_ID_RE.match(i).group(1)) for i in ids)

    def get_candidate(self, candidate_id: str) -> CandidateRecord:
        meta = self.candidate_dir(candidate_id) / "meta.json"
        if not meta.is_file():
            raise UnknownCandidate(candidate_id)
        return CandidateRecord.from_json(json.loads(meta.read_text(encoding="utf-8")))

    def _write_meta(self, record: CandidateRecord) -> None:
        meta = self.candidate_dir(record.candidate_id) / "meta.json"
        meta.write_text(json.dumps(record.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    def create_candidate(
        self,
        origin: str,
        parents: Sequence[str],
        sources: Sequence[Tuple[str, bytes]],
        note: Optional[str] = None,
        name: str = "candidate",
        iteration: int = 0,
        entry: Optional[Sequence[str]] = None,
    ) -> CandidateRecord:
        if origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}")
        if not sources:
            raise EmptyCandidate(f"candidate {name!r} has no source files")
        existing = set(self._candidate_ids())
        for parent in parents:
            if parent not in existing:
                raise UnknownParent(parent)
        candidate_id = f"c{self._next_seq():04d}_{slugify(name)}"
        cdir = self.candidate_dir(candidate_id)
        harness = cdir / "harness"
        harness.mkdir(parents=True)
        for relpath, data in sources:
            target = harness / relpath
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        record = CandidateRecord(
            candidate_id=candidate_id,
            parent_ids=list(parents),
            origin=origin,
            iteration=iteration,
            status=STATUS_PENDING,
            source_files=[(p, len(b)) for p, b in sources],
            proposer_note=note,
            created_at=utc_now(),
            entry=list(entry) if entry else None,
        )
        self._write_meta(record)
        return record

    def write_scores(self, candidate_id: str, report: ScoreReport) -> CandidateRecord:
        record = self.get_candidate(candidate_id)
        scores_path = self.candidate_dir(candidate_id) / "scores.json"
        if scores_path.exists() or record.status == STATUS_EVALUATED:
            raise AlreadyScored(candidate_id)
        if record.status != STATUS_PENDING:
            raise InvalidReport(f"cannot score candidate in status {record.status!r}")
        report.validate()
        scores_path.write_text(
            json.dumps(report.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        record.status = STATUS_EVALUATED
        self._write_meta(record)
        return record

    def get_scores(self, candidate_id: str) -> Optional[ScoreReport]:
        path = self.candidate_dir(candidate_id) / "scores.json"
        if not path.is_file():
            return None
        return ScoreReport.from_json(json.loads(path.read_text(encoding="utf-8")))

    def set_status(self, candidate_id: str, status: str, reason: Optional[str] = None) -> CandidateRecord:
        """Status transition used by the validation gate and crash handling.

        `evaluated` is reserved for write_scores, which guarantees a score
        report exists for every evaluated candidate."""
        if status not in STATUSES:
            raise ValueError(f"unknown status {status!r}")
        if status == STATUS_EVALUATED:
            raise ValueError("status 'evaluated' is set by write_scores only")
        record = self.get_candidate(candidate_id)
        record.status = status
        if reason is not None:
            record.failure_reason = reason
        self._write_meta(record)
        return record

    def list_candidates(
        self, status: Optional[str] = None, origin: Optional[str] = None
    ) -> List[CandidateRecord]:
        records = [self.get_candidate(cid) for cid in self._candidate_ids()]
        if status is not None:
            records = [r for r in records if r.status == status]
        if origin is not None:
            records = [r for r in records if r.origin == origin]
        return records

    # -- traces -----------------------------------------------------------

    def next_trace_seq(self, candidate_id: str, dataset_id: str, example_id: str) -> int:
        """Sequence number the next event appended to this trace must carry."""
        key = (candidate_id, dataset_id, example_id)
        if key not in self._trace_seq:
            path = self.trace_path(candidate_id, dataset_id, example_id)
            self._trace_seq[key] = (
                len(self.read_trace(candidate_id, dataset_id, example_id)) if path.is_file() else 0
            )
        return self._trace_seq[key]

    def append_trace(
        self, candidate_id: str, dataset_id: str, example_id: str, event: TraceEvent
    ) -> None:
        if not (self.candidate_dir(candidate_id) / "meta.json").is_file():
            raise UnknownCandidate(candidate_id)
        event.validate()
        key = (candidate_id, dataset_id, example_id)
        path = self.trace_path(candidate_id, dataset_id, example_id)
        expected = self.next_trace_seq(candidate_id, dataset_id, example_id)
        if event.seq != expected:
            raise SequenceGap(
                f"{candidate_id}/{dataset_id}/{example_id}: expected seq {expected}, got {event.seq}"
            )
        path.parent.mkdir(parents=True, exist_ok=True)
        # A crash can leave a truncated final line; never extend it.
        needs_newline = path.is_file() and path.stat().st_size > 0 and not path.read_bytes().endswith(b"\n")
        with path.open("a", encoding="utf-8") as fh:
            if needs_newline:
                fh.write("\n")
            fh.write(event.to_json_line() + "\n")
        self._trace_seq[key] = expected + 1

    def read_trace(self, candidate_id: str, dataset_id: str, example_id: str) -> List[TraceEvent]:
        """Read one trace file, skipping lines truncated by a crash."""
        path = self.trace_path(candidate_id, dataset_id, example_id)
        if not path.is_file():
            return []
        events: List[TraceEvent] = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                logger.warning("ignoring undecodable trace line in %s", path)
                continue
            events.append(
                TraceEvent(
                    seq=doc["seq"],
                    kind=doc["kind"],
                    payload=doc["payload"],
                    token_count=doc.get("token_count"),
                    timestamp=doc.get("timestamp", ""),
                )
            )
        return events

    def trace_dir(self, candidate_id: str) -> Path:
        return self.candidate_dir(candidate_id) / "traces"

    # -- diffing ----------------------------------------------------------

    def diff_candidates(self, a: str, b: str) -> str:
        rec_a = self.get_candidate(a)
        rec_b = self.get_candidate(b)
        out: List[str] = [f"--- candidates {a} vs {b} ---"]
        paths = sorted({p for p, _ in rec_a.source_files} | {p for p, _ in rec_b.source_files})
        source_chunks: List[str] = []
        for rel in paths:
            pa = self.harness_dir(a) / rel
            pb = self.harness_dir(b) / rel
            ta = pa.read_text(encoding="utf-8").splitlines(keepends=True) if pa.is_file() else []
            tb = pb.read_text(encoding="utf-8").splitlines(keepends=True) if pb.is_file() else []
            diff = list(difflib.unified_diff(ta, tb, fromfile=f"{a}/{rel}", tofile=f"{b}/{rel}"))
            if diff:
                source_chunks.append("".join(diff))
        out.append("== sources ==")
        if source_chunks:
            out.extend(source_chunks)
        else:
            out.append("(identical)")
        out.append("== metrics ==")
        sa, sb = self.get_scores(a), self.get_scores(b)
        if sa is None or sb is None:
            out.append("(unavailable: both candidates must be evaluated)")
        else:
            for name in sorted(set(sa.aggregate.values) | set(sb.aggregate.values)):
                va = sa.aggregate.values.get(name)
                vb = sb.aggregate.values.get(name)
                if va is None or vb is None:
                    out.append(f"{name}: only one side reports this metric")
                else:
                    out.append(f"{name}: a={va:.6g} b={vb:.6g} delta={vb - va:+.6g}")
        return "\n".join(out) + "\n"

    # -- metrics view -------------------------------------------------------

    def evaluated_points(self) -> List[Tuple[str, MetricVector]]:
        """(candidate_id, aggregate metrics) for every evaluated candidate,
        in sequence order."""
        points = []
        for record in self.list_candidates(status=STATUS_EVALUATED):
            report = self.get_scores(record.candidate_id)
            if report is not None:
                points.append((record.candidate_id, report.aggregate))
        return points


def init_run(root_path: Path, manifest: RunManifest) -> Run:
    """Create the run directory layout and persist the manifest."""
    manifest.validate()
    root = Path(root_path)
    if (root / "run.json").exists():
        raise RunAlreadyExists(str(root))
    root.mkdir(parents=True, exist_ok=True)
    (root / "candidates").mkdir(exist_ok=True)
    (root / "proposals").mkdir(exist_ok=True)
    (root / "run.json").write_text(
        json.dumps(manifest.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    skill = root / "skill.md"
    if not skill.exists():
        skill.write_text(_SKILL_PLACEHOLDER, encoding="utf-8")
    return Run(root, manifest)


def load_run(root_path: Path) -> Run:
    """Rebuild a run handle purely from what is on disk."""
    root = Path(root_path)
    manifest_path = root / "run.json"
    if not manifest_path.is_file():
        raise RunNotFound(str(root))
    manifest = RunManifest.from_json(json.loads(manifest_path.read_text(encoding="utf-8")))
    return Run(root, manifest)


def read_source_dir(source_dir: Path, exclude: Iterable[str] = ()) -> List[Tuple[str, bytes]]:
    """Collect (relative path, bytes) pairs from a harness source directory."""
    source_dir = Path(source_dir)
    excluded = set(exclude)
    sources: List[Tuple[str, bytes]] = []
    for path in sorted(source_dir.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(source_dir).as_posix()
        if rel in excluded:
            continue
        sources.append((rel, path.read_bytes()))
    return sources
