"""Multi-objective metrics: dominance, Pareto frontiers, best-so-far series.

All functions are pure and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import EmptySeries, ObjectiveMismatch

MAXIMIZE = "maximize"
MINIMIZE = "minimize"
DIRECTIONS = (MAXIMIZE, MINIMIZE)

# Block size for the vectorized pairwise dominance test. Bounds peak memory
# at roughly n * block * n_objectives booleans.
_FRONTIER_BLOCK = 256


@dataclass(frozen=True)
class ObjectiveSpec:
    """One named objective and the direction in which it improves."""

    name: str
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not self.name:
            raise ValueError("objective name must be non-empty")


@dataclass(frozen=True)
class MetricVector:
    """Named metric values; the unit of Pareto comparison.

    All values must be finite. Evaluation failures never produce a
    MetricVector; they are filtered out upstream by candidate status.
    """

    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.values.items():
            if not math.isfinite(value):
                raise ValueError(f"metric {name!r} is not finite: {value!r}")

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def _check_conformance(vec: MetricVector, objectives: Sequence[ObjectiveSpec]) -> None:
    declared = {o.name for o in objectives}
    got = set(vec.values)
    if got != declared:
        raise ObjectiveMismatch(f"expected objectives {sorted(declared)}, got {sorted(got)}")


def dominates(a: MetricVector, b: MetricVector, objectives: Sequence[ObjectiveSpec]) -> bool:
    """True iff `a` is at least as good as `b` on every objective and
    strictly better on at least one."""
    _check_conformance(a, objectives)
    _check_conformance(b, objectives)
    strict = False
    for obj in objectives:
        av, bv = a.values[obj.name], b.values[obj.name]
        if obj.direction == MAXIMIZE:
            if av < bv:
                return False
            if av > bv:
                strict = True
        else:
            if av > bv:
                return False
            if av < bv:
                strict = True
    return strict


def _oriented_matrix(
    points: Sequence[Tuple[str, MetricVector]], objectives: Sequence[ObjectiveSpec]
) -> np.ndarray:
    """Points as a float matrix with every column oriented larger-is-better."""
    names = [o.name for o in objectives]
    signs = np.array([1.0 if o.direction == MAXIMIZE else -1.0 for o in objectives])
    rows = np.array([[mv.values[n] for n in names] for _, mv in points], dtype=float)
    return rows * signs


def pareto_frontier(
    points: Sequence[Tuple[str, MetricVector]], objectives: Sequence[ObjectiveSpec]
) -> List[Tuple[str, MetricVector]]:
    """Return the non-dominated points, best first on the first objective.

    Duplicated metric vectors are mutually non-dominating, so every copy is
    returned. Ordering is deterministic: first objective (best value first),
    then id ascending.
    """
    if not points:
        return []
    for _, mv in points:
        _check_conformance(mv, objectives)
    a = _oriented_matrix(points, objectives)
    n = len(points)
    dominated = np.zeros(n, dtype=bool)
    for start in range(0, n, _FRONTIER_BLOCK):
        block = a[start : start + _FRONTIER_BLOCK]  # (B, m)
        ge = a[:, None, :] >= block[None, :, :]  # (n, B, m)
        gt = a[:, None, :] > block[None, :, :]
        dom = ge.all(axis=2) & gt.any(axis=2)  # dom[j, i]: j dominates block[i]
        dominated[start : start + _FRONTIER_BLOCK] |= dom.any(axis=0)
    front = [points[i] for i in range(n) if not dominated[i]]
    first = objectives[0]
    if first.direction == MAXIMIZE:
        key = lambda item: (-item[1].values[first.name], item[0])
    else:
        key = lambda item: (item[1].values[first.name], item[0])
    return sorted(front, key=key)


def best_so_far_series(scores: Sequence[float], direction: str) -> List[float]:
    """Running optimum of each prefix; monotone in the given direction."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if not scores:
        raise EmptySeries("best_so_far_series requires at least one score")
    better = max if direction == MAXIMIZE else min
    out: List[float] = []
    best = scores[0]
    for s in scores:
        best = better(best, s)
        out.append(best)
    return out


def select_best(
    candidates: Sequence[Tuple[str, MetricVector]],
    primary: ObjectiveSpec,
    tie_break: ObjectiveSpec,
) -> str:
    """Pick the candidate optimal on the primary objective.

    Ties fall to the tie-break objective, then to the smallest id.
    """
    if not candidates:
        raise ValueError("select_best requires at least one candidate")

    def orient(obj: ObjectiveSpec, value: float) -> float:
        return -value if obj.direction == MAXIMIZE else value

    best_id, _ = min(
        candidates,
        key=lambda item: (
            orient(primary, item[1].values[primary.name]),
            orient(tie_break, item[1].values[tie_break.name]),
            item[0],
        ),
    )
    return best_id


def metric_vector(values: Dict[str, float]) -> MetricVector:
    """Convenience constructor used by callers that build vectors from dicts."""
    return MetricVector(dict(values))
