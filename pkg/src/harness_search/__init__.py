"""Search over LLM harness programs.

An experience store on the filesystem records every candidate harness with
its source, scores, and execution traces; an external proposer command
reads that store and drops new candidates; evaluation produces accuracy
and context-cost metrics compared under Pareto dominance.
"""

from .backends import (
    BackendConfig,
    ChatMessage,
    LlmRequest,
    LlmResponse,
    MockBackend,
    MockRule,
    ReplayBackend,
    count_tokens,
    make_backend,
)
from .evaluator import (
    Dataset,
    evaluate_candidate,
    evaluate_online_classification,
    evaluate_qa,
    load_dataset,
    normalize_answer,
)
from .harness import (
    Example,
    Harness,
    HarnessResources,
    LlmClient,
    Prediction,
    SmokeSpec,
    TaskConfig,
    open_handle,
    validate_candidate,
)
from .pareto import (
    MetricVector,
    ObjectiveSpec,
    best_so_far_series,
    dominates,
    pareto_frontier,
    select_best,
)
from .reference import make_reference_harness
from .retrieval import (
    Bm25Params,
    CorpusEntry,
    RetrievalBundle,
    bm25_search,
    build_bm25,
    build_retrieval_bundle,
    decontaminate,
    dedup,
    ingest_corpus,
    jaccard,
    math_tokenize,
    route_query,
    route_retrieve,
)
from .search import run_search
from .store import (
    CandidateRecord,
    Run,
    RunManifest,
    ScoreReport,
    TraceEvent,
    init_run,
    load_run,
)

__version__ = "0.1.0"
