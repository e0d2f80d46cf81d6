"""Operator command line: run initialization, seeding, search, evaluation,
store navigation, and report emission.

Machine output goes to stdout (CSV or JSON lines); diagnostics go to
stderr. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .backends import make_backend
from .config import SearchConfig, config_from_snapshot, load_config
from .errors import HarnessSearchError
from .evaluator import evaluate_candidate
from .pareto import ObjectiveSpec, best_so_far_series, pareto_frontier, select_best
from .retrieval import (
    build_retrieval_bundle,
    decontaminate,
    ingest_corpus,
    route_retrieve,
    save_corpus,
)
from .search import build_resources, run_search
from .store import RunManifest, init_run, load_run, read_source_dir, utc_now
from .search import load_datasets  # dataset assembly shared with the loop


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _load_config_for(run, config_path: Optional[str]) -> SearchConfig:
    if config_path:
        return load_config(config_path)
    snapshot = run.manifest.search_config_snapshot
    if not snapshot:
        raise HarnessSearchError("no --config given and the run has no config snapshot")
    return config_from_snapshot(snapshot)


def _csv_lines(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def _frontier_csv(run) -> str:
    objectives = run.manifest.objectives
    frontier = pareto_frontier(run.evaluated_points(), objectives)
    header = ["candidate_id"] + [o.name for o in objectives]
    rows = [[cid] + [mv.values[o.name] for o in objectives] for cid, mv in frontier]
    return _csv_lines(header, rows)


def _best_so_far_csv(run) -> str:
    objectives = run.manifest.objectives
    primary = objectives[0]
    points = run.evaluated_points()
    rows: List[List[object]] = []
    if points:
        series = best_so_far_series([mv.values[primary.name] for _, mv in points], primary.direction)
        rows = [[i, value] for i, value in enumerate(series)]
    return _csv_lines(["iteration", "best_so_far"], rows)


# --- subcommands ------------------------------------------------------------------


def cmd_init(args) -> int:
    config = load_config(args.config)
    manifest = RunManifest(
        run_id=config.run_id,
        created_at=utc_now(),
        objectives=config.objectives,
        datasets=[d.dataset_id for d in config.datasets],
        search_config_snapshot=config.raw,
        token_estimator=config.backend.token_estimator,
    )
    init_run(Path(args.run), manifest)
    print(f"initialized run {config.run_id} at {args.run}")
    return 0


def cmd_seed(args) -> int:
    run = load_run(Path(args.run))
    config = _load_config_for(run, args.config)
    registered = []
    existing_slugs = {
        r.candidate_id.split("_", 1)[1] for r in run.list_candidates(origin="seed")
    }
    for name, source_dir in config.seeds:
        from .store import slugify

        if slugify(name) in existing_slugs:
            _err(f"seed {name} already registered; skipping")
            continue
        sources = read_source_dir(source_dir)
        record = run.create_candidate(
            origin="seed", parents=[], sources=sources, name=name, iteration=0
        )
        registered.append(record.candidate_id)
    for cid in registered:
        print(cid)
    return 0


def cmd_validate(args) -> int:
    from .harness import validate_candidate
    from .search import gate_backend

    run = load_run(Path(args.run))
    config = _load_config_for(run, args.config)
    resources = build_resources(config)
    result = validate_candidate(
        run, args.candidate, config.validation.smoke_spec(), gate_backend(config), resources
    )
    if result.passed:
        print("pass")
    else:
        print(f"fail {result.reason}")
        _err(result.detail)
    return 0


def cmd_eval(args) -> int:
    run = load_run(Path(args.run))
    config = _load_config_for(run, args.config)
    if args.backend:
        config.backend.kind = args.backend
    backend = make_backend(config.backend)
    datasets = load_datasets(config)
    if args.dataset:
        datasets = [d for d in datasets if d.dataset_id == args.dataset]
        if not datasets:
            raise HarnessSearchError(f"unknown dataset {args.dataset!r}")
    resources = build_resources(config)
    result = evaluate_candidate(
        run, args.candidate, datasets, backend, config.objectives, resources
    )
    record = run.get_candidate(args.candidate)
    if record.status == "pending":
        run.write_scores(args.candidate, result.report)
    else:
        _err(f"{args.candidate} is {record.status}; scores not rewritten")
    header = ["candidate_id"] + list(result.report.aggregate.values)
    row = [args.candidate] + [result.report.aggregate.values[k] for k in result.report.aggregate.values]
    sys.stdout.write(_csv_lines(header, [row]))
    return 0


def cmd_search(args) -> int:
    run = load_run(Path(args.run))
    config = _load_config_for(run, args.config)
    frontier = run_search(run, config)
    header = ["candidate_id"] + [o.name for o in config.objectives]
    rows = [[rec.candidate_id] + [mv.values[o.name] for o in config.objectives] for rec, mv in frontier]
    sys.stdout.write(_csv_lines(header, rows))
    return 0


def cmd_frontier(args) -> int:
    run = load_run(Path(args.run))
    sys.stdout.write(_frontier_csv(run))
    return 0


def cmd_top(args) -> int:
    run = load_run(Path(args.run))
    objectives = run.manifest.objectives
    by = args.by or objectives[0].name
    primary = next((o for o in objectives if o.name == by), None)
    if primary is None:
        raise HarnessSearchError(f"unknown objective {by!r}")
    tie = next((o for o in objectives if o.name != by), primary)
    points = run.evaluated_points()
    header = ["candidate_id"] + [o.name for o in objectives]
    rows = []
    remaining = list(points)
    for _ in range(min(args.k, len(points))):
        best = select_best(remaining, primary, tie)
        vector = dict(remaining)[best]
        rows.append([best] + [vector.values[o.name] for o in objectives])
        remaining = [(cid, mv) for cid, mv in remaining if cid != best]
    sys.stdout.write(_csv_lines(header, rows))
    return 0


def cmd_diff(args) -> int:
    run = load_run(Path(args.run))
    sys.stdout.write(run.diff_candidates(args.a, args.b))
    return 0


def cmd_report(args) -> int:
    run = load_run(Path(args.run))
    frontier = _frontier_csv(run)
    best = _best_so_far_csv(run)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "frontier.csv").write_text(frontier, encoding="utf-8")
        (out / "best_so_far.csv").write_text(best, encoding="utf-8")
        print(f"wrote {out / 'frontier.csv'} and {out / 'best_so_far.csv'}")
    else:
        sys.stdout.write(frontier)
        sys.stdout.write("\n")
        sys.stdout.write(best)
    return 0


def cmd_corpus_ingest(args) -> int:
    entries = ingest_corpus(args.files, truncation=args.truncate)
    save_corpus(entries, args.out)
    print(f"{len(entries)} entries -> {args.out}")
    return 0


def cmd_corpus_decontaminate(args) -> int:
    corpus = ingest_corpus([args.corpus])
    eval_sets = []
    for eval_file in args.eval:
        problems = []
        for line in Path(eval_file).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            problems.append(doc.get("problem") or doc.get("text") or "")
        eval_sets.append(problems)
    kept, removed = decontaminate(corpus, eval_sets, prefix_len=args.prefix_len, threshold=args.threshold)
    save_corpus(kept, args.out)
    for record in removed:
        print(
            json.dumps(
                {
                    "entry_id": record.entry_id,
                    "matched": record.matched,
                    "criterion": record.criterion,
                    "value": record.value,
                }
            )
        )
    _err(f"kept {len(kept)} / {len(corpus)}; removed {len(removed)}")
    return 0


def cmd_corpus_query(args) -> int:
    corpus = ingest_corpus([args.corpus])
    bundle = build_retrieval_bundle(corpus)
    problem = Path(args.problem).read_text(encoding="utf-8")
    result = route_retrieve(problem, bundle)
    print(json.dumps({"route": result.route, "n": len(result.entries)}))
    for entry in result.entries:
        print(json.dumps(entry.to_json(), ensure_ascii=False))
    return 0


# --- wiring ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("init", cmd_init, help="create a run directory from a config file")
    p.add_argument("--run", required=True)
    p.add_argument("--config", required=True)

    p = add("seed", cmd_seed, help="register seed harness directories")
    p.add_argument("--run", required=True)
    p.add_argument("--config")

    p = add("validate", cmd_validate, help="run the validation gate on one candidate")
    p.add_argument("--run", required=True)
    p.add_argument("--config")
    p.add_argument("candidate")

    p = add("eval", cmd_eval, help="evaluate one candidate on configured datasets")
    p.add_argument("--run", required=True)
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--backend", choices=["mock", "http", "replay"])
    p.add_argument("candidate")

    p = add("search", cmd_search, help="run the full search loop (resumable)")
    p.add_argument("--run", required=True)
    p.add_argument("--config")

    p = add("frontier", cmd_frontier, help="print the Pareto frontier as CSV")
    p.add_argument("--run", required=True)

    p = add("top", cmd_top, help="print the k best candidates by an objective")
    p.add_argument("--run", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--by")

    p = add("diff", cmd_diff, help="diff code and results of two candidates")
    p.add_argument("--run", required=True)
    p.add_argument("a")
    p.add_argument("b")

    p = add("report", cmd_report, help="emit frontier and best-so-far CSVs")
    p.add_argument("--run", required=True)
    p.add_argument("--out")

    corpus = sub.add_parser("corpus", help="retrieval corpus pipelines")
    corpus_sub = corpus.add_subparsers(dest="corpus_command", required=True)

    p = corpus_sub.add_parser("ingest", help="normalize corpus files into one JSONL")
    p.set_defaults(fn=cmd_corpus_ingest)
    p.add_argument("files", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--truncate", type=int, default=5000)

    p = corpus_sub.add_parser("decontaminate", help="drop entries matching eval problems")
    p.set_defaults(fn=cmd_corpus_decontaminate)
    p.add_argument("--corpus", required=True)
    p.add_argument("--eval", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--prefix-len", type=int, default=64)

    p = corpus_sub.add_parser("query", help="route and retrieve for one problem file")
    p.set_defaults(fn=cmd_corpus_query)
    p.add_argument("--corpus", required=True)
    p.add_argument("--problem", required=True)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except HarnessSearchError as exc:
        _err(f"error: {exc}")
        return 1
    except FileNotFoundError as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
