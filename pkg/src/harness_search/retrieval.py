"""Lexical retrieval stack: math-aware tokenization, BM25 and TF-IDF
indexes, Jaccard dedup, corpus decontamination, and the four-route
retrieval policy used by the math harness.

Indexes are immutable after build and safe for concurrent search.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import EmptyCorpus, EmptyQuery, InvalidK

logger = logging.getLogger(__name__)

ROUTE_COMBINATORICS = "combinatorics"
ROUTE_GEOMETRY = "geometry"
ROUTE_NUMBER_THEORY = "number_theory"
ROUTE_DEFAULT = "default"
# Gate priority: most specific first; default always matches.
ROUTE_ORDER = (ROUTE_GEOMETRY, ROUTE_COMBINATORICS, ROUTE_NUMBER_THEORY)

# LaTeX commands and caret/underscore groups survive as atomic tokens;
# everything else splits on whitespace/punctuation.
_TOKEN_RE = re.compile(r"\\[a-zA-Z]+|[\^_]\{[^{}]*\}|[a-zA-Z]+|[0-9]+")

SOLUTION_INDEX_CHAR_LIMIT = 4000  # runtime filter for retrievable entries
SOLUTION_PROMPT_CHAR_LIMIT = 3000  # cap applied to returned solutions
INGEST_TRUNCATION = 5000
HARD_DIFFICULTY_FLOOR = 6.0
TECHNIQUE_WINDOW_CHARS = 500


def math_tokenize(text: str) -> List[str]:
    """Tokenize text keeping LaTeX commands and ^{...}/_{...} groups atomic."""
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        tok = match.group()
        if tok[0] in ("\\", "^", "_"):
            tokens.append(tok)
        else:
            tokens.append(tok.casefold())
    return tokens


def jaccard(a: str, b: str) -> float:
    """Jaccard similarity of the two token sets; both empty counts as 1.0."""
    sa, sb = set(math_tokenize(a)), set(math_tokenize(b))
    if not sa and not sb:
        return 1.0
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


# --- corpus -----------------------------------------------------------------


@dataclass
class CorpusEntry:
    entry_id: str
    problem: str
    solution: str = ""
    source: str = ""
    difficulty: Optional[float] = None
    is_proof: bool = False

    def __post_init__(self):
        if not self.problem:
            raise ValueError("problem must be non-empty")
        if self.difficulty is not None and not (0 <= self.difficulty <= 10):
            raise ValueError(f"difficulty out of range: {self.difficulty}")

    def to_json(self) -> dict:
        doc = {
            "id": self.entry_id,
            "problem": self.problem,
            "solution": self.solution,
            "source": self.source,
        }
        if self.difficulty is not None:
            doc["difficulty"] = self.difficulty
        if self.is_proof:
            doc["is_proof"] = True
        return doc


def ingest_corpus(
    files: Sequence[Union[str, Path]],
    truncation: Union[int, Mapping[str, int]] = INGEST_TRUNCATION,
) -> List[CorpusEntry]:
    """Load corpus JSONL files, truncating solutions and dropping rows with
    empty problems. `truncation` may be a per-source mapping."""
    entries: List[CorpusEntry] = []
    for file_path in files:
        path = Path(file_path)
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                problem = (doc.get("problem") or "").strip()
                if not problem:
                    logger.info("dropping %s:%d: empty problem", path.name, lineno)
                    continue
                source = doc.get("source", "")
                limit = truncation.get(source, INGEST_TRUNCATION) if isinstance(truncation, Mapping) else truncation
                solution = doc.get("solution") or ""
                entries.append(
                    CorpusEntry(
                        entry_id=str(doc.get("id") or f"{path.stem}:{lineno}"),
                        problem=problem,
                        solution=solution[:limit],
                        source=source,
                        difficulty=doc.get("difficulty"),
                        is_proof=bool(doc.get("is_proof", False)),
                    )
                )
    return entries


def save_corpus(entries: Sequence[CorpusEntry], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_json(), ensure_ascii=False) + "\n")


# --- BM25 --------------------------------------------------------------------


@dataclass
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("k1 must be positive")
        if not (0 <= self.b <= 1):
            raise ValueError("b must be in [0, 1]")


class Bm25Index:
    """Okapi BM25 over entry problem text with the math-aware tokenizer.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    score(d, q) = sum over query terms of
        idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_d / avg_len))
    """

    def __init__(self, entries: Sequence[CorpusEntry], params: Optional[Bm25Params] = None):
        if not entries:
            raise EmptyCorpus("cannot build a BM25 index over zero entries")
        self.entries = list(entries)
        self.params = params or Bm25Params()
        self._doc_tf: List[Counter] = [Counter(math_tokenize(e.problem)) for e in self.entries]
        self._doc_len = [sum(tf.values()) for tf in self._doc_tf]
        self._avg_len = sum(self._doc_len) / len(self.entries)
        df: Counter = Counter()
        for tf in self._doc_tf:
            df.update(tf.keys())
        n = len(self.entries)
        self._idf = {t: math.log(1 + (n - d + 0.5) / (d + 0.5)) for t, d in df.items()}
        self._postings: Dict[str, List[Tuple[int, int]]] = {}
        for i, tf in enumerate(self._doc_tf):
            for term, count in tf.items():
                self._postings.setdefault(term, []).append((i, count))

    def scores(self, query: str) -> List[float]:
        terms = math_tokenize(query)
        if not terms:
            raise EmptyQuery("query produced no tokens")
        k1, b = self.params.k1, self.params.b
        out = [0.0] * len(self.entries)
        for term in terms:
            idf = self._idf.get(term)
            if idf is None:
                continue
            for doc_idx, tf in self._postings[term]:
                norm = k1 * (1 - b + b * self._doc_len[doc_idx] / self._avg_len)
                out[doc_idx] += idf * (tf * (k1 + 1)) / (tf + norm)
        return out


def build_bm25(entries: Sequence[CorpusEntry], params: Optional[Bm25Params] = None) -> Bm25Index:
    return Bm25Index(entries, params)


def bm25_search(
    index: Bm25Index,
    query: str,
    top_k: int,
    min_score: Optional[float] = None,
) -> List[Tuple[CorpusEntry, float]]:
    """Top-k entries by BM25 score, descending, ties broken by entry_id."""
    scores = index.scores(query)
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], index.entries[i].entry_id))
    results = []
    for i in ranked:
        if min_score is not None and scores[i] < min_score:
            continue
        results.append((index.entries[i], scores[i]))
        if len(results) >= top_k:
            break
    return results


# --- TF-IDF ------------------------------------------------------------------


class TfidfIndex:
    """Raw-count TF with idf = ln(N / df) + 1, L2-normalized vectors."""

    def __init__(self, texts: Sequence[str]):
        if not texts:
            raise ValueError("cannot build a TF-IDF index over zero documents")
        self.texts = list(texts)
        n = len(texts)
        doc_tf = [Counter(math_tokenize(t)) for t in texts]
        df: Counter = Counter()
        for tf in doc_tf:
            df.update(tf.keys())
        self._idf = {t: math.log(n / d) + 1.0 for t, d in df.items()}
        self._vectors: List[Dict[str, float]] = []
        for tf in doc_tf:
            vec = {t: c * self._idf[t] for t, c in tf.items()}
            norm = math.sqrt(sum(w * w for w in vec.values()))
            if norm > 0:
                vec = {t: w / norm for t, w in vec.items()}
            self._vectors.append(vec)

    def _query_vector(self, text: str) -> Dict[str, float]:
        tf = Counter(math_tokenize(text))
        vec = {t: c * self._idf[t] for t, c in tf.items() if t in self._idf}
        norm = math.sqrt(sum(w * w for w in vec.values()))
        if norm > 0:
            vec = {t: w / norm for t, w in vec.items()}
        return vec

    def similarities(self, text: str) -> List[float]:
        qv = self._query_vector(text)
        sims = []
        for vec in self._vectors:
            if len(qv) < len(vec):
                small, big = qv, vec
            else:
                small, big = vec, qv
            sims.append(sum(w * big.get(t, 0.0) for t, w in small.items()))
        return sims


def build_tfidf(texts: Sequence[str]) -> TfidfIndex:
    return TfidfIndex(texts)


def tfidf_top_k(index: TfidfIndex, query: str, k: int) -> List[Tuple[int, float]]:
    """Nearest stored documents by cosine similarity as (position, score),
    ties broken by insertion order; k larger than the corpus is clamped."""
    if k <= 0:
        raise InvalidK(f"k must be positive, got {k}")
    sims = index.similarities(query)
    order = sorted(range(len(sims)), key=lambda i: -sims[i])  # stable: insertion order on ties
    return [(i, sims[i]) for i in order[:k]]


# --- decontamination ----------------------------------------------------------


def _normalize_for_prefix(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().casefold())


@dataclass
class RemovalRecord:
    entry_id: str
    matched: str  # "<eval set index>:<item index>"
    criterion: str  # "exact_prefix" | "jaccard"
    value: float


def decontaminate(
    corpus: Sequence[CorpusEntry],
    eval_sets: Sequence[Sequence[str]],
    prefix_len: int = 64,
    threshold: float = 0.8,
) -> Tuple[List[CorpusEntry], List[RemovalRecord]]:
    """Drop corpus entries matching any eval problem by exact normalized
    prefix or by Jaccard similarity >= threshold."""
    if not (0 < threshold <= 1):
        raise ValueError("threshold must be in (0, 1]")
    if prefix_len <= 0:
        raise ValueError("prefix_len must be positive")
    references = []
    for set_idx, problems in enumerate(eval_sets):
        for item_idx, text in enumerate(problems):
            references.append(
                (
                    f"{set_idx}:{item_idx}",
                    _normalize_for_prefix(text)[:prefix_len],
                    set(math_tokenize(text)),
                )
            )
    kept: List[CorpusEntry] = []
    removed: List[RemovalRecord] = []
    for entry in corpus:
        prefix = _normalize_for_prefix(entry.problem)[:prefix_len]
        tokens = set(math_tokenize(entry.problem))
        record = None
        for ref, ref_prefix, _ in references:
            if prefix == ref_prefix:
                record = RemovalRecord(entry.entry_id, ref, "exact_prefix", float(len(prefix)))
                break
        if record is None:
            for ref, _, ref_tokens in references:
                union = tokens | ref_tokens
                sim = 1.0 if not union else len(tokens & ref_tokens) / len(union)
                if sim >= threshold:
                    record = RemovalRecord(entry.entry_id, ref, "jaccard", sim)
                    break
        if record is None:
            kept.append(entry)
        else:
            removed.append(record)
    return kept, removed


# --- near-duplicate pruning -----------------------------------------------------


def dedup(
    scored: Sequence[Tuple[CorpusEntry, float]],
    max_keep: int,
    threshold: float = 0.8,
) -> List[Tuple[CorpusEntry, float]]:
    """Greedy scan in score order keeping entries whose problem stays below
    the Jaccard threshold against everything already kept."""
    if not (0 < threshold <= 1):
        raise ValueError("threshold must be in (0, 1]")
    if max_keep <= 0:
        return []
    ordered = sorted(scored, key=lambda item: (-item[1], item[0].entry_id))
    kept: List[Tuple[CorpusEntry, float]] = []
    kept_tokens: List[set] = []
    for entry, score in ordered:
        tokens = set(math_tokenize(entry.problem))
        clash = False
        for other in kept_tokens:
            union = tokens | other
            sim = 1.0 if not union else len(tokens & other) / len(union)
            if sim >= threshold:
                clash = True
                break
        if not clash:
            kept.append((entry, score))
            kept_tokens.append(tokens)
            if len(kept) >= max_keep:
                break
    return kept


# --- routing ---------------------------------------------------------------------


@dataclass
class RouteGate:
    name: str
    keywords: List[str] = field(default_factory=list)
    patterns: List[re.Pattern] = field(default_factory=list)

    def fires(self, text: str) -> bool:
        folded = text.casefold()
        for kw in self.keywords:
            if kw in folded:
                return True
        for pattern in self.patterns:
            if pattern.search(text):
                return True
        return False


def parse_gate_lines(name: str, lines: Iterable[str]) -> RouteGate:
    """Gate file format: one keyword or /regex/ per line; # starts a comment."""
    keywords: List[str] = []
    patterns: List[re.Pattern] = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if len(line) > 2 and line.startswith("/") and line.endswith("/"):
            patterns.append(re.compile(line[1:-1]))
        else:
            keywords.append(line.casefold())
    return RouteGate(name, keywords, patterns)


def _read_data_lines(relative: str) -> List[str]:
    return (
        resources.files("harness_search")
        .joinpath(relative)
        .read_text(encoding="utf-8")
        .splitlines()
    )


def default_gates() -> List[RouteGate]:
    """Shipped gate vocabularies, checked in priority order."""
    return [
        parse_gate_lines(name, _read_data_lines(f"data/gates/{name}.txt"))
        for name in ROUTE_ORDER
    ]


def default_technique_keywords() -> List[str]:
    out = []
    for raw in _read_data_lines("data/technique_keywords.txt"):
        line = raw.strip()
        if line and not line.startswith("#"):
            out.append(line.casefold())
    return out


def route_query(problem: str, gates: Optional[Sequence[RouteGate]] = None) -> str:
    """Assign the problem to exactly one route; the default route is the
    fallback when no gate fires."""
    for gate in gates if gates is not None else default_gates():
        if gate.fires(problem):
            return gate.name
    return ROUTE_DEFAULT


# --- reranking ---------------------------------------------------------------------


def rerank(
    scored: Sequence[Tuple[CorpusEntry, float]],
    alpha: float = 0.3,
    beta: float = 0.2,
    technique_keywords: Optional[Sequence[str]] = None,
    technique_bonus: bool = False,
) -> List[Tuple[CorpusEntry, float]]:
    """Reorder by z-normalized BM25 + alpha * difficulty/10 + beta * early
    technique bonus; ties broken by entry_id."""
    if not scored:
        return []
    raw = [s for _, s in scored]
    mean = sum(raw) / len(raw)
    var = sum((s - mean) ** 2 for s in raw) / len(raw)
    std = math.sqrt(var)
    keywords = [k.casefold() for k in (technique_keywords or [])]
    rescored = []
    for entry, score in scored:
        z = (score - mean) / std if std > 0 else 0.0
        difficulty = (entry.difficulty / 10.0) if entry.difficulty is not None else 0.0
        bonus = 0.0
        if technique_bonus and keywords:
            head = entry.solution[:TECHNIQUE_WINDOW_CHARS].casefold()
            if any(k in head for k in keywords):
                bonus = 1.0
        rescored.append((entry, z + alpha * difficulty + beta * bonus))
    rescored.sort(key=lambda item: (-item[1], item[0].entry_id))
    return rescored


def adaptive_k(scores: Sequence[float], k_min: int = 2, k_max: int = 3) -> int:
    """Few examples when the top score dominates, more when scores are flat.

    Returns k_min when the top score is at least 1.5x the mean of the top
    three (padded with the last available score), else k_max; always clamped
    to the number of available scores.
    """
    if not scores:
        raise ValueError("adaptive_k requires at least one score")
    top3 = list(scores[:3])
    while len(top3) < 3:
        top3.append(scores[len(scores) - 1] if len(scores) < 3 else top3[-1])
    mean = sum(top3) / 3.0
    k = k_min if scores[0] >= 1.5 * mean else k_max
    return max(1, min(k, len(scores)))


# --- route configs and the full pipeline ------------------------------------------


@dataclass
class RouteConfig:
    route: str
    fetch_k: int
    dedup_to: Optional[int] = None
    keep: Optional[int] = None  # None means adaptive selection
    rerank: bool = False
    technique_bonus: bool = False
    fixed_reference_count: int = 0
    k_min: int = 2
    k_max: int = 3

    def __post_init__(self):
        if self.fetch_k < 1:
            raise ValueError("fetch_k must be >= 1")
        if self.keep is not None and self.fetch_k < self.keep:
            raise ValueError("fetch_k must be >= keep")
        if self.fixed_reference_count < 0:
            raise ValueError("fixed_reference_count must be >= 0")


def default_route_configs() -> Dict[str, RouteConfig]:
    return {
        ROUTE_COMBINATORICS: RouteConfig(
            ROUTE_COMBINATORICS, fetch_k=20, dedup_to=8, keep=3, rerank=True
        ),
        ROUTE_GEOMETRY: RouteConfig(
            ROUTE_GEOMETRY, fetch_k=5, keep=2, rerank=False, fixed_reference_count=1
        ),
        ROUTE_NUMBER_THEORY: RouteConfig(
            ROUTE_NUMBER_THEORY, fetch_k=12, keep=3, rerank=True, technique_bonus=True
        ),
        ROUTE_DEFAULT: RouteConfig(ROUTE_DEFAULT, fetch_k=10, keep=None, rerank=True),
    }


@dataclass
class RetrievalBundle:
    """Everything the math harness needs at query time."""

    entries: List[CorpusEntry]
    index: Bm25Index
    hard_index: Optional[Bm25Index]
    gates: List[RouteGate]
    technique_keywords: List[str]
    route_configs: Dict[str, RouteConfig]
    dedup_threshold: float = 0.8
    rerank_alpha: float = 0.3
    rerank_beta: float = 0.2


def build_retrieval_bundle(
    corpus: Sequence[CorpusEntry],
    params: Optional[Bm25Params] = None,
    gates: Optional[List[RouteGate]] = None,
    technique_keywords: Optional[List[str]] = None,
    route_configs: Optional[Dict[str, RouteConfig]] = None,
) -> RetrievalBundle:
    """Apply the runtime corpus filter and build the main and hard indexes."""
    usable = [
        e for e in corpus if e.solution and len(e.solution) < SOLUTION_INDEX_CHAR_LIMIT
    ]
    if not usable:
        raise EmptyCorpus("no entries with non-empty solutions under the length cap")
    hard = [e for e in usable if e.difficulty is not None and e.difficulty > HARD_DIFFICULTY_FLOOR]
    return RetrievalBundle(
        entries=usable,
        index=build_bm25(usable, params),
        hard_index=build_bm25(hard, params) if hard else None,
        gates=gates if gates is not None else default_gates(),
        technique_keywords=technique_keywords
        if technique_keywords is not None
        else default_technique_keywords(),
        route_configs=route_configs or default_route_configs(),
    )


@dataclass
class RouteResult:
    route: str
    fetched: List[Tuple[CorpusEntry, float]]
    deduped: Optional[List[Tuple[CorpusEntry, float]]]
    reference: Optional[CorpusEntry]
    entries: List[CorpusEntry]  # final selection, solutions capped for prompts


def _truncate_solution(entry: CorpusEntry) -> CorpusEntry:
    if len(entry.solution) <= SOLUTION_PROMPT_CHAR_LIMIT:
        return entry
    return dataclasses.replace(entry, solution=entry.solution[:SOLUTION_PROMPT_CHAR_LIMIT])


def route_retrieve(
    problem: str,
    bundle: RetrievalBundle,
    route_configs: Optional[Dict[str, RouteConfig]] = None,
) -> RouteResult:
    """Run the gated retrieval pipeline for one problem."""
    configs = route_configs or bundle.route_configs
    route = route_query(problem, bundle.gates)
    cfg = configs[route]

    reference: Optional[CorpusEntry] = None
    if cfg.fixed_reference_count > 0 and bundle.hard_index is not None:
        hard_hits = bm25_search(bundle.hard_index, problem, cfg.fixed_reference_count)
        if hard_hits:
            reference = hard_hits[0][0]

    fetched = bm25_search(bundle.index, problem, cfg.fetch_k)
    working = [
        (e, s) for e, s in fetched if reference is None or e.entry_id != reference.entry_id
    ]
    retrieval_scores = [s for _, s in working]

    deduped: Optional[List[Tuple[CorpusEntry, float]]] = None
    if cfg.dedup_to is not None:
        working = deduped = dedup(working, cfg.dedup_to, bundle.dedup_threshold)
        retrieval_scores = [s for _, s in working]

    if cfg.rerank:
        working = rerank(
            working,
            alpha=bundle.rerank_alpha,
            beta=bundle.rerank_beta,
            technique_keywords=bundle.technique_keywords,
            technique_bonus=cfg.technique_bonus,
        )

    if cfg.keep is not None:
        k = cfg.keep
    elif retrieval_scores:
        k = adaptive_k(retrieval_scores, cfg.k_min, cfg.k_max)
    else:
        k = 0

    selected = ([reference] if reference is not None else []) + [e for e, _ in working[:k]]
    return RouteResult(
        route=route,
        fetched=fetched,
        deduped=deduped,
        reference=reference,
        entries=[_truncate_solution(e) for e in selected],
    )
