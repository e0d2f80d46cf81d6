import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harness_search.errors import EmptySeries, ObjectiveMismatch
from harness_search.pareto import (
    MetricVector,
    ObjectiveSpec,
    best_so_far_series,
    dominates,
    pareto_frontier,
    select_best,
)

ACC_CTX = [ObjectiveSpec("acc", "maximize"), ObjectiveSpec("ctx", "minimize")]


def mv(acc, ctx):
    return MetricVector({"acc": acc, "ctx": ctx})


# Aggregate (accuracy, context) rows of the online-classification comparison.
TABLE_ROWS = {
    "zero_shot": (27.4, 0.0),
    "few_shot_8": (34.3, 2.0),
    "few_shot_32": (35.4, 7.9),
    "few_shot_all": (40.8, 12.3),
    "mce": (40.0, 28.5),
    "ace": (40.9, 50.8),
    "best_discovered": (48.6, 11.4),
}


class TestDominates:
    def test_equal_vectors_do_not_dominate(self):
        assert not dominates(mv(1.0, 2.0), mv(1.0, 2.0), ACC_CTX)

    def test_frontier_endpoints_mutually_non_dominated(self):
        low_cost = mv(40.1, 5.4)
        high_acc = mv(48.6, 45.5)
        assert not dominates(low_cost, high_acc, ACC_CTX)
        assert not dominates(high_acc, low_cost, ACC_CTX)

    def test_strictly_better_on_both(self):
        assert dominates(mv(48.6, 11.4), mv(40.8, 12.3), ACC_CTX)

    def test_objective_mismatch(self):
        with pytest.raises(ObjectiveMismatch):
            dominates(mv(1, 1), MetricVector({"acc": 1.0}), ACC_CTX)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            MetricVector({"acc": float("nan")})


@st.composite
def vectors(draw):
    return mv(draw(st.integers(0, 5)), draw(st.integers(0, 5)))


class TestDominanceProperties:
    @given(vectors())
    def test_irreflexive(self, a):
        assert not dominates(a, a, ACC_CTX)

    @given(vectors(), vectors())
    def test_antisymmetric(self, a, b):
        assert not (dominates(a, b, ACC_CTX) and dominates(b, a, ACC_CTX))


def brute_force_frontier(points, objectives):
    """Direct transliteration of the definition; the independent oracle."""
    out = []
    for pid, pv in points:
        if not any(dominates(qv, pv, objectives) for qid, qv in points if qid != pid or qv is not pv):
            out.append(pid)
    return sorted(out)


class TestFrontier:
    def test_single_point(self):
        assert pareto_frontier([("a", mv(1, 1))], ACC_CTX) == [("a", mv(1, 1))]

    def test_table_rows_frontier(self):
        points = [(name, mv(a, c)) for name, (a, c) in TABLE_ROWS.items()]
        frontier = {name for name, _ in pareto_frontier(points, ACC_CTX)}
        assert frontier == {"zero_shot", "few_shot_8", "few_shot_32", "best_discovered"}

    def test_duplicates_all_returned(self):
        points = [("a", mv(1, 1)), ("b", mv(1, 1))]
        assert [pid for pid, _ in pareto_frontier(points, ACC_CTX)] == ["a", "b"]

    def test_ordering_best_first_then_id(self):
        points = [("b", mv(2, 1)), ("a", mv(2, 1)), ("c", mv(3, 5))]
        assert [pid for pid, _ in pareto_frontier(points, ACC_CTX)] == ["c", "a", "b"]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40))
    def test_matches_brute_force(self, raw):
        points = [(f"p{i}", mv(a, c)) for i, (a, c) in enumerate(raw)]
        got = sorted(pid for pid, _ in pareto_frontier(points, ACC_CTX))
        assert got == brute_force_frontier(points, ACC_CTX)

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=25),
        st.randoms(),
    )
    def test_permutation_invariant(self, raw, rng):
        points = [(f"p{i}", mv(a, c)) for i, (a, c) in enumerate(raw)]
        shuffled = list(points)
        rng.shuffle(shuffled)
        a = {pid for pid, _ in pareto_frontier(points, ACC_CTX)}
        b = {pid for pid, _ in pareto_frontier(shuffled, ACC_CTX)}
        assert a == b

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=25))
    def test_monotone_transform_invariance(self, raw):
        # exp is strictly increasing; neither dominance nor frontier
        # membership may change under it
        points = [(f"p{i}", mv(a, c)) for i, (a, c) in enumerate(raw)]
        transformed = [(pid, mv(float(np.exp(v.values["acc"])), v.values["ctx"])) for pid, v in points]
        for (_, u1), (_, u2) in zip(points[:8], points[1:9]):
            t1 = mv(float(np.exp(u1.values["acc"])), u1.values["ctx"])
            t2 = mv(float(np.exp(u2.values["acc"])), u2.values["ctx"])
            assert dominates(u1, u2, ACC_CTX) == dominates(t1, t2, ACC_CTX)
        a = {pid for pid, _ in pareto_frontier(points, ACC_CTX)}
        b = {pid for pid, _ in pareto_frontier(transformed, ACC_CTX)}
        assert a == b


class TestBestSoFar:
    def test_running_max(self):
        assert best_so_far_series([3, 1, 5], "maximize") == [3, 3, 5]

    def test_running_min(self):
        assert best_so_far_series([3, 1, 5], "minimize") == [3, 1, 1]

    def test_single(self):
        assert best_so_far_series([7.0], "maximize") == [7.0]

    def test_empty(self):
        with pytest.raises(EmptySeries):
            best_so_far_series([], "maximize")


class TestSelectBest:
    ACC = ObjectiveSpec("acc", "maximize")
    CTX = ObjectiveSpec("ctx", "minimize")

    def test_distinct_primaries(self):
        points = [("a", mv(1, 0)), ("b", mv(3, 9)), ("c", mv(2, 0))]
        assert select_best(points, self.ACC, self.CTX) == "b"

    def test_tie_break_on_secondary(self):
        points = [("a", mv(1, 9)), ("b", mv(1, 5))]
        assert select_best(points, self.ACC, self.CTX) == "b"

    def test_full_tie_smallest_id(self):
        points = [("b", mv(1, 5)), ("a", mv(1, 5))]
        assert select_best(points, self.ACC, self.CTX) == "a"
