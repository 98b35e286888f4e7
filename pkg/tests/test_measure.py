import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hand_matrix as hm
from oracles import contribution_oracle, difficulty_oracle
from taskbal.core import MetricSpec, MissingEntry, RunId, TaskGraph, TaskSpec, ValidationMatrix, validate_task_graph
from taskbal.measure import (
    ContributionMatrix,
    DegenerateDenominator,
    DifficultyApproach,
    DifficultyVector,
    NegativePerformanceWarning,
    aggregate_performance,
    contribution,
    contribution_matrix,
    difficulty,
    difficulty_vector,
    measure,
)

MEMBERS = {u: [u] for u in hm.UNITS}


def as_float(rows):
    return np.array(rows, dtype=float)


class TestHandMatrix:
    def test_aggregate_flips_lower_metrics(self):
        v = aggregate_performance(hm.matrix(), hm.graph(), RunId.mini(), "b")
        assert v == pytest.approx((0.50 - 0.30) / 2, abs=1e-15)

    def test_standard_contribution_matches_hand_values(self):
        cm = contribution_matrix(hm.matrix(), hm.graph(), "standard")
        np.testing.assert_allclose(cm.values, as_float(hm.STANDARD_C), atol=1e-12, rtol=0)

    def test_chat_contribution_matches_hand_values(self):
        cm = contribution_matrix(hm.matrix(), hm.graph(), "chat")
        np.testing.assert_allclose(cm.values, as_float(hm.CHAT_C), atol=1e-12, rtol=0)

    @pytest.mark.parametrize("approach,expected", [
        ("real", hm.REAL_D), ("precise", hm.PRECISE_D), ("chat", hm.CHAT_D)])
    def test_difficulty_matches_hand_values(self, approach, expected):
        dv = difficulty_vector(hm.matrix(), hm.graph(), approach)
        np.testing.assert_allclose(dv.values, as_float(expected), atol=1e-12, rtol=0)

    @pytest.mark.parametrize("mode", ["standard", "chat"])
    def test_oracle_agreement(self, mode):
        cm = contribution_matrix(hm.matrix(), hm.graph(), mode)
        ref = contribution_oracle(hm.VALUES, hm.UNITS, MEMBERS, hm.DIRECTIONS, chat=mode == "chat")
        np.testing.assert_allclose(cm.values, ref, atol=1e-12, rtol=0)

    def test_measure_pairs_mode_with_difficulty_approach(self):
        for mode, approach in [("standard", "real"), ("precise", "precise"), ("chat", "chat")]:
            _, dv = measure(hm.matrix(), hm.graph(), mode)
            ref = difficulty_oracle(hm.VALUES, hm.UNITS, MEMBERS, hm.DIRECTIONS, approach)
            np.testing.assert_allclose(dv.values, ref, atol=1e-12, rtol=0)

    def test_diagonal_exactly_one(self):
        cm = contribution_matrix(hm.matrix(), hm.graph())
        assert np.all(np.diag(cm.values) == 1.0)

    def test_missing_entry_names_pair(self):
        m = ValidationMatrix({k: v for k, v in hm.matrix().entries.items() if k[0] != RunId.plus_mini("c")})
        with pytest.raises(MissingEntry) as err:
            contribution_matrix(m, hm.graph())
        assert err.value.run == RunId.plus_mini("c")


class TestDegenerate:
    def flat(self):
        g = validate_task_graph(TaskGraph((TaskSpec("x", (MetricSpec("m"),)), TaskSpec("y", (MetricSpec("m"),)))))
        e = {}
        for run in (RunId.mini(), RunId.plus_mini("x"), RunId.plus_mini("y")):
            for t in ("x", "y"):
                e[(run, t, "m")] = 0.5
        return ValidationMatrix(e), g

    def test_zero_own_gain_raises(self):
        m, g = self.flat()
        with pytest.raises(DegenerateDenominator) as err:
            contribution_matrix(m, g)
        assert err.value.pair == ("x", "y")

    def test_fallback_zero(self):
        m, g = self.flat()
        assert contribution(m, g, "x", "y", fallback_zero=True) == 0.0

    def test_zero_full_performance_raises(self):
        g = validate_task_graph(TaskGraph((TaskSpec("x", (MetricSpec("m"),)),)), min_units=1)
        m = ValidationMatrix({(RunId.mini(), "x", "m"): 0.0, (RunId.plus_mini("x"), "x", "m"): 0.0})
        with pytest.raises(DegenerateDenominator):
            difficulty(m, g, "x")

    def test_negative_performance_warns(self):
        g = validate_task_graph(TaskGraph((TaskSpec("x", (MetricSpec("m"),)),)), min_units=1)
        m = ValidationMatrix({(RunId.mini(), "x", "m"): -0.2, (RunId.plus_mini("x"), "x", "m"): 0.4})
        with pytest.warns(NegativePerformanceWarning):
            difficulty(m, g, "x", DifficultyApproach.REAL)


finite = st.floats(0.05, 1.0, allow_nan=False)


class TestInvariants:
    @settings(max_examples=200, deadline=None)
    @given(scale=st.floats(0.01, 100.0), shift=st.floats(-10.0, 10.0))
    def test_affine_rescaling_leaves_contribution_unchanged(self, scale, shift):
        m, g = hm.matrix(), hm.graph()
        base = contribution_matrix(m, g).values
        moved = contribution_matrix(m.transformed(lambda run, t, mm, v: scale * v + shift), g).values
        np.testing.assert_allclose(moved, base, atol=1e-12 * max(1.0, 1.0 / scale), rtol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=3, max_size=3))
    def test_random_matrices_match_oracle(self, cross, mini):
        units = ("p", "q", "r")
        g = validate_task_graph(TaskGraph(tuple(TaskSpec(u, (MetricSpec("m"),)) for u in units)))
        values = {}
        k = 0
        for a, i in enumerate(units):
            values[("mini", i, "m")] = mini[a]
            values[(f"plus_mini:{i}", i, "m")] = mini[a] + 1.0
            for j in units:
                if i != j:
                    values[(f"plus_mini:{i}", j, "m")] = cross[k]
                    k += 1
        m = ValidationMatrix({(RunId.parse(r), t, mm): v for (r, t, mm), v in values.items()})
        dirs = {(u, "m"): "higher" for u in units}
        members = {u: [u] for u in units}
        np.testing.assert_allclose(contribution_matrix(m, g).values,
                                   contribution_oracle(values, units, members, dirs), atol=1e-12, rtol=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NegativePerformanceWarning)
            np.testing.assert_allclose(difficulty_vector(m, g).values,
                                       difficulty_oracle(values, units, members, dirs), atol=1e-12, rtol=0)


class TestContainers:
    def test_contribution_diagonal_enforced(self):
        with pytest.raises(ValueError):
            ContributionMatrix(("a", "b"), [[1.0, 0.2], [0.3, 0.9]])

    def test_json_round_trip(self):
        cm = contribution_matrix(hm.matrix(), hm.graph())
        back = ContributionMatrix.from_json(cm.to_json())
        np.testing.assert_array_equal(back.values, cm.values)
        dv = DifficultyVector(("a",), [0.25])
        assert DifficultyVector.from_json(dv.to_json()).values[0] == 0.25

    def test_tables_render_every_unit(self):
        cm, dv = measure(hm.matrix(), hm.graph())
        for table in (cm.to_table(), dv.to_table()):
            for u in hm.UNITS:
                assert u in table

    def test_per_group_unit_averages_tasks(self):
        tasks = tuple(TaskSpec(t, (MetricSpec("m"),), group=gr) for t, gr in
                      [("t1", "g"), ("t2", "g"), ("t3", "h")])
        g = validate_task_graph(TaskGraph(tasks, "per_group"))
        m = ValidationMatrix({(RunId.mini(), "t1", "m"): 0.2, (RunId.mini(), "t2", "m"): 0.6})
        assert aggregate_performance(m, g, RunId.mini(), "g") == pytest.approx(0.4, abs=1e-15)
