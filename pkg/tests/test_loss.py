import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ew_oracle, scaled_softmax_oracle, tla_oracle, vitw_oracle
from taskbal.core import WeightVector
from taskbal.loss import (
    DwaState,
    EmptyBatch,
    LossMode,
    TokenLossBatch,
    aggregate,
    dwa_weights,
    ew_loss,
    rlw_weights,
    tla_loss,
    token_coefficients,
    vitw_loss,
)

UNITS = ("u0", "u1", "u2", "u3")


@st.composite
def batches(draw, min_units=1):
    """Random TokenLossBatch over up to four units, with ragged samples."""
    n_units = draw(st.integers(min_units, len(UNITS)))
    entries = []
    for u in range(n_units):
        for s in range(draw(st.integers(1, 4))):
            toks = draw(st.lists(st.floats(0.0, 20.0, allow_nan=False), min_size=1, max_size=12))
            entries.append((UNITS[u], 100 * u + s, toks))
    order = draw(st.permutations(range(len(entries))))
    return TokenLossBatch.from_entries([entries[k] for k in order], UNITS[:n_units])


def per_unit(batch):
    out = {u: [] for u in batch.units}
    for ui, x in zip(batch.unit_index, batch.losses):
        out[batch.units[ui]].append(float(x))
    return out


positive_weights = st.lists(st.floats(0.01, 100.0), min_size=len(UNITS), max_size=len(UNITS))


class TestHandExamples:
    def two_tasks(self):
        return TokenLossBatch.from_entries([("a", 0, [1, 1, 1, 1]), ("b", 1, [3])])

    def test_ew(self):
        assert ew_loss(self.two_tasks()) == pytest.approx(1.4, abs=1e-15)
        assert ew_loss(TokenLossBatch.from_entries([("a", 0, [0.7])])) == 0.7

    def test_vitw(self):
        w = WeightVector(("a", "b"), [2.0, 1.0])
        assert vitw_loss(self.two_tasks(), w) == pytest.approx(11 / 9, abs=1e-15)

    def test_tla(self):
        assert tla_loss(self.two_tasks()) == pytest.approx(2.0, abs=1e-15)

    def test_zero_losses(self):
        b = TokenLossBatch.from_entries([("a", 0, [0.0, 0.0])])
        assert ew_loss(b) == 0.0

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            TokenLossBatch((), np.zeros(0), np.zeros(0), np.zeros(0))

    def test_missing_weight(self):
        with pytest.raises(KeyError):
            vitw_loss(self.two_tasks(), WeightVector(("a",), [1.0]))

    def test_negative_loss_rejected(self):
        with pytest.raises(ValueError):
            TokenLossBatch.from_entries([("a", 0, [-0.1])])

    def test_aggregate_dispatch(self):
        b = self.two_tasks()
        assert aggregate(b, "ew") == ew_loss(b)
        assert aggregate(b, LossMode.TLA) == tla_loss(b)
        with pytest.raises(ValueError):
            aggregate(b, "vitw")


class TestProperties:
    @settings(max_examples=1000, deadline=None)
    @given(batches())
    def test_tla_is_vitw_with_inverse_counts(self, batch):
        _, counts = batch.unit_sums()
        lam = WeightVector(batch.units, 1.0 / counts)
        assert abs(tla_loss(batch) - vitw_loss(batch, lam)) <= 1e-12 * max(1.0, tla_loss(batch))

    @settings(max_examples=1000, deadline=None)
    @given(batches())
    def test_vitw_with_ones_is_ew(self, batch):
        assert abs(vitw_loss(batch, WeightVector.ones(batch.units)) - ew_loss(batch)) <= 1e-12

    @settings(max_examples=300, deadline=None)
    @given(batches(), positive_weights)
    def test_against_oracles(self, batch, w):
        lam = dict(zip(UNITS, w))
        groups = per_unit(batch)
        assert ew_loss(batch) == pytest.approx(ew_oracle(groups), rel=1e-12, abs=1e-12)
        assert tla_loss(batch) == pytest.approx(tla_oracle(groups), rel=1e-12, abs=1e-12)
        wv = WeightVector(UNITS, w)
        assert vitw_loss(batch, wv) == pytest.approx(vitw_oracle(groups, lam), rel=1e-12, abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(batches(), positive_weights, st.floats(1e-3, 1e3))
    def test_weight_scale_invariance(self, batch, w, c):
        a = vitw_loss(batch, WeightVector(UNITS, w))
        b = vitw_loss(batch, WeightVector(UNITS, c * np.asarray(w)))
        assert abs(a - b) <= 1e-12 * max(1.0, a)

    @settings(max_examples=300, deadline=None)
    @given(batches(min_units=2), positive_weights, st.integers(0, 3), st.floats(1.01, 10.0))
    def test_raising_weight_moves_loss_toward_unit_mean(self, batch, w, k, factor):
        k = k % len(batch.units)
        sums, counts = batch.unit_sums()
        mean_k = sums[k] / counts[k]
        before = vitw_loss(batch, WeightVector(UNITS, w))
        raised = list(w)
        raised[k] *= factor
        after = vitw_loss(batch, WeightVector(UNITS, raised))
        if mean_k > before + 1e-9:
            assert after > before
        elif mean_k < before - 1e-9:
            assert after < before

    @settings(max_examples=300, deadline=None)
    @given(batches(), positive_weights, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, batch, w, rnd):
        perm = list(range(batch.n_tokens))
        rnd.shuffle(perm)
        shuffled = TokenLossBatch(batch.units, batch.unit_index[perm], batch.sample_id[perm], batch.losses[perm])
        wv = WeightVector(UNITS, w)
        assert ew_loss(shuffled) == pytest.approx(ew_loss(batch), rel=1e-12, abs=1e-15)
        assert tla_loss(shuffled) == pytest.approx(tla_loss(batch), rel=1e-12, abs=1e-15)
        assert vitw_loss(shuffled, wv) == pytest.approx(vitw_loss(batch, wv), rel=1e-12, abs=1e-15)

    @settings(max_examples=300, deadline=None)
    @given(batches(), positive_weights)
    def test_token_coefficients_reproduce_losses(self, batch, w):
        wv = WeightVector(UNITS, w)
        for mode, ref in ((LossMode.EW, ew_loss(batch)), (LossMode.TLA, tla_loss(batch)),
                          (LossMode.VITW, vitw_loss(batch, wv))):
            coef = token_coefficients(batch, mode, wv)
            assert float(np.dot(coef, batch.losses)) == pytest.approx(ref, rel=1e-12, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(batches(), st.floats(0.01, 100.0))
    def test_single_unit_weight_cancels(self, batch, lam):
        one = TokenLossBatch.from_entries([(batch.units[0], 0, batch.losses[batch.unit_index == 0])])
        assert vitw_loss(one, WeightVector((one.units[0],), [lam])) == pytest.approx(ew_loss(one), rel=1e-12)


class TestRlw:
    def test_reproducible(self):
        a = rlw_weights(np.random.default_rng(3), UNITS)
        b = rlw_weights(np.random.default_rng(3), UNITS)
        np.testing.assert_array_equal(a.values, b.values)

    def test_sum_and_sign(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            w = rlw_weights(rng, UNITS)
            assert w.values.sum() == pytest.approx(4.0, abs=1e-12)
            assert np.all(w.values > 0)

    def test_single_unit(self):
        np.testing.assert_array_equal(rlw_weights(np.random.default_rng(0), 1).values, [1.0])

    def test_mean_is_one(self):
        rng = np.random.default_rng(11)
        draws = np.array([rlw_weights(rng, UNITS).values for _ in range(100_000)])
        np.testing.assert_allclose(draws.mean(axis=0), np.ones(4), atol=0.02)


class TestDwa:
    def test_cold_start(self):
        state = DwaState()
        w, state = dwa_weights(state, 3, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(w.values, np.ones(3))
        w, state = dwa_weights(state, 3, [0.5, 1.0, 3.0])
        np.testing.assert_array_equal(w.values, np.ones(3))

    def test_ratio_softmax(self):
        state = DwaState(temperature=1.0)
        state.push([2.0, 2.0])
        state.push([2.0, 1.0])
        w, _ = dwa_weights(state, 2)
        np.testing.assert_allclose(w.values, scaled_softmax_oracle([1.0, 0.5], 1.0), rtol=1e-12)

    def test_equal_ratios_give_ones(self):
        state = DwaState()
        state.push([4.0, 2.0, 1.0])
        state.push([2.0, 1.0, 0.5])
        w, _ = dwa_weights(state, 3)
        np.testing.assert_allclose(w.values, np.ones(3), atol=1e-15)

    def test_history_validation(self):
        with pytest.raises(ValueError):
            DwaState().push([1.0, 0.0])
        with pytest.raises(ValueError):
            DwaState(temperature=0.0)
