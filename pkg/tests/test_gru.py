import logging

import numpy as np
import pytest

from oracles import numeric_gradient, relative_error
from sbrbench.core import as_sessions
from sbrbench.gru import GRU4Rec, GruConfig, gru_step, init_params, output_loss, sequence_objective, session_parallel_batches
from sbrbench.losses import LossKind


def _params(n_items=4, hidden=3, seed=0, scale=None):
    params = init_params(n_items, hidden, np.random.default_rng(seed))
    if scale is not None:
        for v in params.values():
            v[...] = np.random.default_rng(seed + 1).normal(scale=scale, size=v.shape)
    return params


class TestStep:
    def test_zero_params_halve_the_state(self):
        params = {k: np.zeros_like(v) for k, v in _params().items()}
        h = np.array([[0.4, -1.0, 2.0]])
        np.testing.assert_allclose(gru_step(params, h, [1]), h / 2)
        np.testing.assert_array_equal(gru_step(params, np.zeros((1, 3)), [1]), np.zeros((1, 3)))

    def test_finite_for_random_params(self):
        params = _params(scale=0.1)
        h = np.zeros((2, 3))
        for x in [0, 1, 2, 3]:
            h = gru_step(params, h, [x, 3 - x])
        assert np.all(np.isfinite(h))


class TestBatches:
    def test_hand_simulation(self):
        A, B, C, D, E = range(5)
        batches = list(session_parallel_batches(as_sessions([[A, B, C], [D, E]]), 2))
        assert batches[0].inputs.tolist() == [A, D] and batches[0].targets.tolist() == [B, E]
        assert batches[0].reset.tolist() == [True, True]
        assert batches[1].lanes.tolist() == [0]
        assert batches[1].inputs.tolist() == [B] and batches[1].targets.tolist() == [C]
        assert len(batches) == 2

    def test_refill_flags_reset(self):
        batches = list(session_parallel_batches(as_sessions([[0, 1], [2, 3, 4], [5, 6]]), 2))
        # lane 0 finishes after one step and takes the third session
        assert batches[1].lanes.tolist() == [0, 1]
        assert batches[1].inputs.tolist() == [5, 3]
        assert batches[1].reset.tolist() == [True, False]

    def test_single_lane_unrolls_sequentially(self):
        batches = list(session_parallel_batches(as_sessions([[0, 1, 2], [3, 4]]), 1))
        pairs = [(b.inputs[0], b.targets[0]) for b in batches]
        assert pairs == [(0, 1), (1, 2), (3, 4)]

    def test_pairs_are_adjacent(self):
        rng = np.random.default_rng(3)
        train = [list(rng.integers(0, 9, size=rng.integers(2, 7))) for _ in range(20)]
        adjacent = {(a, b) for s in train for a, b in zip(s, s[1:])}
        emitted = 0
        for batch in session_parallel_batches(as_sessions(train), 4):
            for x, y in zip(batch.inputs, batch.targets):
                assert (x, y) in adjacent
                emitted += 1
        assert emitted == sum(len(s) - 1 for s in train)


class TestGradients:
    @pytest.mark.parametrize("loss", [k.value for k in LossKind])
    def test_full_bptt(self, loss):
        params = _params(scale=0.5)
        items = [0, 2, 1, 3]
        negatives = [[1, 3], [0, 2], [2, 0]]
        _, analytic = sequence_objective(params, items, negatives, loss)
        for name, p in params.items():
            numeric = numeric_gradient(lambda: sequence_objective(params, items, negatives, loss)[0], p)
            assert relative_error(analytic[name], numeric) <= 1e-3, name

    @pytest.mark.parametrize("loss", [k.value for k in LossKind])
    def test_batched_output_layer(self, loss):
        params = _params(scale=0.5)
        h = np.random.default_rng(5).normal(size=(3, 3))
        cols = np.array([1, 3, 0, 2])
        _, grads, dh = output_loss(params, h, cols, loss)
        numeric_h = numeric_gradient(lambda: output_loss(params, h, cols, loss)[0], h)
        assert relative_error(dh, numeric_h) <= 1e-3
        dense_O = np.zeros_like(params["O"])
        np.add.at(dense_O, grads["O"][0], grads["O"][1])
        numeric_O = numeric_gradient(lambda: output_loss(params, h, cols, loss)[0], params["O"])
        assert relative_error(dense_O, numeric_O) <= 1e-3


class TestModel:
    toy = [[0, 1]] * 30 + [[2, 3]] * 30

    def test_learns_repeated_pair(self):
        model = GRU4Rec(hidden=8, epochs=20, batch_size=4, seed=1).fit(self.toy)
        assert model.rank([0], 1).items[0] == 1

    def test_loss_decreases(self):
        model = GRU4Rec(hidden=8, epochs=5, batch_size=4, seed=1).fit(self.toy)
        assert model.loss_history[-1] < model.loss_history[0]

    def test_seed_determinism(self):
        a = GRU4Rec(hidden=4, epochs=2, seed=3).fit(self.toy)
        b = GRU4Rec(hidden=4, epochs=2, seed=3).fit(self.toy)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_order_sensitive(self):
        train = [[0, 1, 2]] * 20 + [[1, 0, 3]] * 20
        model = GRU4Rec(hidden=8, epochs=20, batch_size=4, seed=0).fit(train)
        assert model.rank([0, 1], 1).items[0] == 2
        assert model.rank([1, 0], 1).items[0] == 3

    def test_zero_params_rank_by_bias_then_ties(self):
        model = GRU4Rec(hidden=4, epochs=0).fit(self.toy)
        for v in model.params.values():
            v[...] = 0.0
        assert model.rank([0], 4).items.tolist() == [0, 1, 2, 3]
        model.params["bo"][:] = [0.0, 0.0, 1.0, 0.5]
        assert model.rank([0], 4).items.tolist() == [2, 3, 0, 1]

    def test_reset_matches_fresh_state(self):
        model = GRU4Rec(hidden=4, epochs=2).fit(self.toy)
        state = model.new_session()
        for item in [0, 1, 2]:
            state.update(item)
        state.reset()
        state.update(3)
        fresh = model.new_session()
        fresh.update(3)
        np.testing.assert_array_equal(state.h, fresh.h)
        np.testing.assert_array_equal(state.rank(4).scores, fresh.rank(4).scores)

    def test_incremental_state_equals_refold(self):
        model = GRU4Rec(hidden=4, epochs=2).fit(self.toy)
        state = model.new_session()
        for item in [2, 3, 0]:
            state.update(item)
        np.testing.assert_array_equal(state.rank(4).items, model.rank([2, 3, 0], 4).items)

    def test_unknown_item_skipped_with_warning(self, caplog):
        model = GRU4Rec(hidden=4, epochs=1).fit(self.toy)
        with caplog.at_level(logging.WARNING):
            r = model.rank([0, 99], 4)
        assert "unknown item" in caplog.text
        np.testing.assert_array_equal(r.items, model.rank([0], 4).items)

    def test_empty_prefix_rejected(self):
        model = GRU4Rec(hidden=4, epochs=0).fit(self.toy)
        with pytest.raises(ValueError):
            model.rank([], 3)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GruConfig(loss="hinge")
        with pytest.raises(ValueError):
            GruConfig(hidden=0)
