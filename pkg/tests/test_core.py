import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbrbench.core import ItemIndex, Session, as_sessions, make_rng, sigmoid, softmax, top_k


class TestItemIndex:
    def test_first_appearance_order(self):
        idx = ItemIndex()
        assert [idx.intern(x) for x in ["X", "Y", "X"]] == [0, 1, 0]
        assert len(idx) == 2

    def test_empty(self):
        assert len(ItemIndex()) == 0

    def test_large_catalog(self):
        idx = ItemIndex(f"item{n}" for n in range(28_582))
        assert len(idx) == 28_582

    @given(st.lists(st.text(min_size=1), min_size=1))
    def test_round_trip(self, raw):
        idx = ItemIndex()
        for r in raw:
            assert idx.raw(idx.intern(r)) == r


class TestSigmoidSoftmax:
    def test_sigmoid_values(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(-800.0) == 0.0
        assert sigmoid(800.0) == 1.0
        assert sigmoid(1.0) == pytest.approx(0.7310585786300049, abs=1e-15)

    def test_softmax_values(self):
        np.testing.assert_allclose(softmax([2.0, 2.0, 2.0]), [1 / 3] * 3)
        np.testing.assert_allclose(softmax([5.0]), [1.0])
        np.testing.assert_allclose(softmax([0.0, np.log(3.0)]), [0.25, 0.75], atol=1e-15)

    def test_softmax_empty(self):
        with pytest.raises(ValueError):
            softmax([])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=10), st.floats(-100, 100))
    def test_softmax_shift_invariant(self, v, c):
        p = softmax(v)
        assert abs(p.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(softmax(np.asarray(v) + c), p, atol=1e-12)


class TestTopK:
    def test_ties_by_popularity_then_id(self):
        pop = np.array([1, 5, 5, 0])
        r = top_k([0, 1, 2, 3], [1.0, 1.0, 1.0, 2.0], 4, pop)
        assert r.items.tolist() == [3, 1, 2, 0]

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=30), st.integers(1, 40))
    def test_total_order_and_stability(self, scores, k):
        n = len(scores)
        pop = np.arange(n)[::-1] % 3
        a = top_k(np.arange(n), np.array(scores, float), k, pop)
        b = top_k(np.arange(n)[::-1], np.array(scores[::-1], float), k, pop)
        assert a.items.tolist() == b.items.tolist()
        full = sorted(range(n), key=lambda i: (-scores[i], -pop[i], i))
        assert a.items.tolist() == full[:k]

    def test_rounding_noise_counts_as_a_tie(self):
        # 0.1 + 0.2 and 0.3 differ in the last bit only
        pop = np.array([1, 9])
        assert top_k([0, 1], [0.1 + 0.2, 0.3], 2, pop).items.tolist() == [1, 0]
        assert top_k([0, 1, 2], [0.1 + 0.2, 0.3, 0.0], 1, pop).items.tolist() == [1]
        assert top_k([0, 1], [0.3, 0.3 + 1e-9], 2, pop).items.tolist() == [1, 0]
        assert top_k([0, 1], [0.3 + 1e-9, 0.3], 2, pop).items.tolist() == [0, 1]

    def test_k_zero(self):
        assert len(top_k([0, 1], [1.0, 2.0], 0)) == 0


class TestSessions:
    def test_as_sessions(self):
        s = as_sessions([[3, 4], [5]])
        assert s[1].start_time == 1 and s[0].items == (3, 4)

    def test_session_times(self):
        s = Session(0, (1, 2, 3), (10, 20, 40))
        assert (s.start_time, s.end_time, len(s)) == (10, 40, 3)
        assert s.events[2].ordinal == 3


class TestRng:
    def test_streams_reproducible_and_distinct(self):
        a = make_rng(1, "x").random(3)
        np.testing.assert_array_equal(a, make_rng(1, "x").random(3))
        assert not np.array_equal(a, make_rng(1, "y").random(3))
        assert not np.array_equal(a, make_rng(2, "x").random(3))
