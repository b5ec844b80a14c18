import math

import numpy as np
import pytest

from oracles import relative_error
from sbrbench.losses import (
    AdagradState,
    LossKind,
    TrainingError,
    adagrad_rows,
    adagrad_step,
    loss_bpr,
    loss_max,
    loss_top1,
    ranking_loss,
)


def _fd(kind, r_pos, r_negs, h=1e-5):
    g_pos = (ranking_loss(kind, r_pos + h, r_negs)[0] - ranking_loss(kind, r_pos - h, r_negs)[0]) / (2 * h)
    g_negs = np.zeros_like(r_negs)
    for j in range(r_negs.size):
        e = np.zeros_like(r_negs)
        e[j] = h
        g_negs[j] = (ranking_loss(kind, r_pos, r_negs + e)[0] - ranking_loss(kind, r_pos, r_negs - e)[0]) / (2 * h)
    return g_pos, g_negs


class TestValues:
    def test_bpr_symmetric_pair(self):
        assert loss_bpr(0.3, [0.3])[0] == pytest.approx(math.log(2))

    def test_bpr_saturates(self):
        assert loss_bpr(50.0, [-50.0])[0] < 1e-30

    def test_bpr_two_negatives(self):
        # -(log sigmoid(1) + log sigmoid(0.5)) / 2, evaluated with mpmath at 30 digits
        assert loss_bpr(1.0, [0.0, 0.5])[0] == pytest.approx(0.393669335849164757, abs=1e-15)

    def test_top1_zero_scores(self):
        assert loss_top1(0.0, [0.0])[0] == pytest.approx(1.0)

    def test_top1_rank_term_vanishes_for_very_negative_negatives(self):
        # sigmoid(r_j - r_pos) -> 0 while the regularizer sigmoid(r_j^2) -> 1
        assert loss_top1(0.0, [-40.0])[0] == pytest.approx(1.0, abs=1e-15)
        assert loss_top1(0.0, [-40.0])[0] - loss_top1(0.0, [-20.0])[0] < 0

    def test_top1_single_negative(self):
        assert loss_top1(1.0, [0.0])[0] == pytest.approx(0.768941421369995121, abs=1e-15)

    @pytest.mark.parametrize("kind", ["bpr", "top1"])
    def test_max_single_negative_equals_base(self, kind):
        base = ranking_loss(kind, 0.7, [0.2])
        mx = loss_max(kind + "_max", 0.7, [0.2])
        assert mx[0] == pytest.approx(base[0], abs=1e-15)
        assert mx[1] == pytest.approx(base[1], abs=1e-15)
        np.testing.assert_allclose(mx[2], base[2], atol=1e-15)

    @pytest.mark.parametrize("kind", ["bpr", "top1"])
    def test_max_saturated_softmax(self, kind):
        assert loss_max(kind, 1.0, [5.0, -100.0])[0] == pytest.approx(ranking_loss(kind, 1.0, [5.0])[0], rel=1e-9)

    @pytest.mark.parametrize("kind", ["bpr", "top1"])
    def test_max_uniform_negatives(self, kind):
        assert loss_max(kind, 1.0, [0.4, 0.4])[0] == pytest.approx(ranking_loss(kind, 1.0, [0.4])[0], abs=1e-15)

    @pytest.mark.parametrize("kind", list(LossKind))
    def test_empty_negatives_rejected(self, kind):
        with pytest.raises(ValueError):
            ranking_loss(kind, 0.0, [])

    def test_batched_rows_match_scalar_calls(self):
        rng = np.random.default_rng(0)
        pos, negs = rng.normal(size=4), rng.normal(size=(4, 3))
        for kind in LossKind:
            loss, gp, gn = ranking_loss(kind, pos, negs)
            for b in range(4):
                l1, p1, n1 = ranking_loss(kind, pos[b], negs[b])
                assert loss[b] == pytest.approx(l1, abs=1e-15)
                assert gp[b] == pytest.approx(p1, abs=1e-15)
                np.testing.assert_allclose(gn[b], n1, atol=1e-15)


class TestGradients:
    @pytest.mark.parametrize("kind", list(LossKind))
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            r_pos = float(rng.normal())
            r_negs = rng.normal(size=int(rng.integers(1, 6)))
            _, gp, gn = ranking_loss(kind, r_pos, r_negs)
            fp, fn = _fd(kind, r_pos, r_negs)
            worst = max(worst, relative_error(gp, fp), relative_error(gn, fn))
        assert worst <= 1e-4


class TestAdagrad:
    def test_first_step(self):
        state = AdagradState((1,), lr=0.1)
        p = np.zeros(1)
        adagrad_step(state, p, np.ones(1))
        assert p[0] == pytest.approx(-0.1 / (1 + 1e-6))
        assert p[0] == pytest.approx(-0.1, abs=1e-6)

    def test_zero_gradient_is_a_no_op(self):
        state = AdagradState((3,), lr=0.1)
        p = np.arange(3.0)
        adagrad_step(state, p, np.zeros(3))
        np.testing.assert_array_equal(p, np.arange(3.0))

    def test_accumulators_never_decrease(self):
        rng = np.random.default_rng(1)
        state = AdagradState((4,), lr=0.1)
        p = np.zeros(4)
        prev = state.acc.copy()
        for _ in range(20):
            adagrad_step(state, p, rng.normal(size=4))
            assert np.all(state.acc >= prev)
            prev = state.acc.copy()

    def test_non_finite_gradient_names_step(self):
        state = AdagradState((2,), lr=0.1)
        p = np.zeros(2)
        adagrad_step(state, p, np.ones(2))
        with pytest.raises(TrainingError, match="step 1"):
            adagrad_step(state, p, np.array([np.nan, 0.0]))

    def test_sparse_rows_sum_duplicates(self):
        dense_state, sparse_state = AdagradState((3, 2), lr=0.1), AdagradState((3, 2), lr=0.1)
        a, b = np.ones((3, 2)), np.ones((3, 2))
        rows = np.array([0, 2, 0])
        g = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        dense = np.zeros((3, 2))
        np.add.at(dense, rows, g)
        adagrad_step(dense_state, a, dense)
        adagrad_rows(sparse_state, b, rows, g)
        np.testing.assert_allclose(a, b, atol=1e-15)
