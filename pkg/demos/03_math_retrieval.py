#!/usr/bin/env python3
# The lexical retrieval stack: math-aware tokens, BM25, routing, dedup,
# decontamination, and the full four-route pipeline on the fixture corpus.

from importlib import resources

from harness_search import (
    CorpusEntry,
    build_retrieval_bundle,
    decontaminate,
    ingest_corpus,
    jaccard,
    math_tokenize,
    route_query,
    route_retrieve,
)

# LaTeX commands and ^{...}/_{...} groups survive tokenization as atomic
# units, so structural math notation is searchable.
print(math_tokenize(r"Show that \frac{a}{b} + x^{2} is minimal"))

# The shipped 50-entry fixture corpus covers all four routes.
corpus_path = resources.files("harness_search").joinpath("data/fixture_corpus.jsonl")
corpus = ingest_corpus([str(corpus_path)])
bundle = build_retrieval_bundle(corpus)
print(f"\ncorpus: {len(corpus)} entries, {len(bundle.entries)} retrievable, "
      f"{len(bundle.hard_index.entries)} hard references")

# The router assigns each problem to exactly one route via keyword and
# regex gates, checked geometry -> combinatorics -> number_theory -> default.
problems = [
    "In triangle ABC the incircle touches BC at D. Find BD/DC.",
    "How many permutations of a multiset avoid a fixed pattern?",
    "Find all primes p dividing 2^p + 1.",
    "Evaluate the infinite telescoping series.",
]
for problem in problems:
    print(f"{route_query(problem):15s} <- {problem}")

# Each route runs its own pipeline; geometry prepends one hard reference,
# combinatorics dedups 20 fetched candidates to 8 before keeping 3.
print()
for problem in problems:
    result = route_retrieve(problem, bundle)
    ids = [e.entry_id for e in result.entries]
    print(f"{result.route:15s} fetched={len(result.fetched):2d} kept={ids}")

# Near-duplicate filtering and decontamination both ride on Jaccard
# similarity over token sets, with the 0.8 threshold.
leak = corpus[0]
print("\njaccard(entry, itself) =", jaccard(leak.problem, leak.problem))
kept, removed = decontaminate(corpus, [[leak.problem]], prefix_len=64, threshold=0.8)
print(f"decontaminating against one leaked problem: kept {len(kept)}, removed "
      f"{[(r.entry_id, r.criterion) for r in removed]}")
