#!/usr/bin/env python3
# Pareto tools walkthrough: metric vectors, dominance, frontier extraction,
# best-so-far series, and single-candidate selection.

from harness_search import (
    MetricVector,
    ObjectiveSpec,
    best_so_far_series,
    dominates,
    pareto_frontier,
    select_best,
)

# Two objectives: maximize accuracy, minimize additional context tokens
# (thousands). This is the canonical trade-off the search optimizes.
objectives = [ObjectiveSpec("accuracy", "maximize"), ObjectiveSpec("context_k", "minimize")]

# A population of evaluated harnesses: simple baselines, two expensive
# context-heavy strategies, and one strong discovered candidate.
population = [
    ("zero_shot", MetricVector({"accuracy": 27.4, "context_k": 0.0})),
    ("few_shot_8", MetricVector({"accuracy": 34.3, "context_k": 2.0})),
    ("few_shot_32", MetricVector({"accuracy": 35.4, "context_k": 7.9})),
    ("few_shot_all", MetricVector({"accuracy": 40.8, "context_k": 12.3})),
    ("memory_curator", MetricVector({"accuracy": 40.0, "context_k": 28.5})),
    ("skill_library", MetricVector({"accuracy": 40.9, "context_k": 50.8})),
    ("discovered", MetricVector({"accuracy": 48.6, "context_k": 11.4})),
]

# Dominance is strict: better-or-equal everywhere, strictly better somewhere.
a, b = population[-1][1], population[3][1]
print("discovered dominates few_shot_all?", dominates(a, b, objectives))  # True
print("few_shot_all dominates discovered?", dominates(b, a, objectives))  # False

# The frontier keeps every non-dominated point, best accuracy first.
frontier = pareto_frontier(population, objectives)
print("\nfrontier:")
for name, metrics in frontier:
    print(f"  {name:12s} acc={metrics['accuracy']:5.1f} ctx={metrics['context_k']:5.1f}")

# best_so_far_series turns the evaluation log into a learning curve.
accuracies = [metrics["accuracy"] for _, metrics in population]
print("\nevaluation order:", accuracies)
print("best so far:     ", best_so_far_series(accuracies, "maximize"))

# Selecting a single deployment candidate: primary objective, then the
# tie-break objective, then the smallest id.
winner = select_best(population, objectives[0], objectives[1])
print("\nselected:", winner)
