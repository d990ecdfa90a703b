import numpy as np
import pytest

from reembedqa.encoders import (BiLstmStack, LstmCellParams, bilstm_forward,
                                init_bilstm, init_lstm_params, init_mlp,
                                lstm_sequence, lstm_step, mlp_forward)
from reembedqa.tensor import Tensor, flip_rows, grad_check, sum_all


def zeros_state(h):
    return Tensor(np.zeros((1, h))), Tensor(np.zeros((1, h)))


class TestLstmStep:
    def test_all_zero_weights_give_zero_states(self):
        params = LstmCellParams(w=Tensor(np.zeros((4, 9))), u=Tensor(np.zeros((3, 9))),
                                b=Tensor(np.zeros(9)))
        h0, c0 = zeros_state(3)
        h, c = lstm_step(Tensor(np.ones((1, 4))), h0, c0, params)
        assert np.array_equal(h.data, np.zeros((1, 3)))
        assert np.array_equal(c.data, np.zeros((1, 3)))

    def test_saturated_input_gate_overwrites_cell(self, rng):
        params = init_lstm_params(4, 3, rng)
        params.b.data[:3] = 1000.0  # input gate saturates to exactly 1.0
        h0 = Tensor(rng.normal(size=(1, 3)).astype(np.float32))
        c_prev = Tensor(rng.normal(size=(1, 3)).astype(np.float32))
        x = Tensor(rng.normal(size=(1, 4)).astype(np.float32))
        _, c, gates = lstm_step(x, h0, c_prev, params, return_gates=True)
        assert np.all(gates["input"].data == 1.0)
        assert np.array_equal(c.data, gates["candidate"].data)

    def test_coupled_gates_sum_to_exactly_one(self, rng):
        params = init_lstm_params(5, 4, rng)
        x = Tensor(rng.normal(size=(1, 5)).astype(np.float32))
        h0, c0 = zeros_state(4)
        _, _, gates = lstm_step(x, h0, c0, params, return_gates=True)
        total = gates["input"].data + gates["forget"].data
        assert np.all(total == 1.0)

    def test_step_gradients_match_finite_differences(self, rng):
        params = init_lstm_params(4, 3, rng, dtype=np.float64)
        x = Tensor(rng.normal(size=(1, 4)), requires_grad=True, dtype=np.float64)
        h0 = Tensor(rng.normal(size=(1, 3)), requires_grad=True, dtype=np.float64)
        c0 = Tensor(rng.normal(size=(1, 3)), requires_grad=True, dtype=np.float64)

        def f():
            h, c = lstm_step(x, h0, c0, params)
            return sum_all(h) + sum_all(c)

        err = grad_check(f, [x, h0, c0, params.w, params.u, params.b])
        assert err < 1e-4


class TestLstmSequence:
    def test_matches_composed_steps(self, rng):
        params = init_lstm_params(4, 3, rng, dtype=np.float64)
        xs = Tensor(rng.normal(size=(7, 4)), dtype=np.float64)
        fused = lstm_sequence(xs, params)
        h, c = zeros_state(3)
        from reembedqa.tensor import slice_rows
        for t in range(7):
            h, c = lstm_step(slice_rows(xs, t, t + 1), h, c, params)
            assert np.allclose(h.data[0], fused.data[t], atol=1e-13)

    def test_empty_sequence_rejected(self, rng):
        params = init_lstm_params(4, 3, rng)
        with pytest.raises(ValueError, match="empty"):
            lstm_sequence(Tensor(np.zeros((0, 4))), params)

    def test_bptt_gradients(self, rng):
        params = init_lstm_params(3, 4, rng, dtype=np.float64)
        xs = Tensor(rng.normal(size=(6, 3)), requires_grad=True, dtype=np.float64)
        mix = Tensor(rng.normal(size=(6, 4)), dtype=np.float64)
        from reembedqa.tensor import mul
        err = grad_check(lambda: sum_all(mul(lstm_sequence(xs, params), mix)),
                         [xs, params.w, params.u, params.b])
        assert err < 1e-4


class TestBiLstm:
    def test_length_one_sequence(self, rng):
        stack = init_bilstm(4, 3, 1, rng, 0.0, 0.0)
        xs = Tensor(rng.normal(size=(1, 4)).astype(np.float32))
        out = bilstm_forward(xs, stack, "eval")[-1]
        assert out.shape == (1, 6)
        # Both directions saw exactly one step: each half equals a single
        # lstm_step from zero states with that direction's parameters.
        for half, params in ((slice(0, 3), stack.layers[0][0]),
                             (slice(3, 6), stack.layers[0][1])):
            h, _ = lstm_step(xs, *zeros_state(3), params)
            assert np.allclose(out.data[0, half], h.data[0], atol=1e-7)

    def test_output_shape_every_layer(self, rng):
        stack = init_bilstm(5, 4, 3, rng, 0.0, 0.0)
        xs = Tensor(rng.normal(size=(9, 5)).astype(np.float32))
        outs = bilstm_forward(xs, stack, "eval")
        assert len(outs) == 3
        assert all(o.shape == (9, 8) for o in outs)

    def test_empty_sequence_rejected(self, rng):
        stack = init_bilstm(5, 4, 1, rng)
        with pytest.raises(ValueError, match="empty"):
            bilstm_forward(Tensor(np.zeros((0, 5))), stack, "eval")

    def test_reversed_input_with_swapped_directions(self, rng):
        fwd = init_lstm_params(4, 3, rng)
        bwd = init_lstm_params(4, 3, rng)
        stack = BiLstmStack(layers=[(fwd, bwd)], input_dropout=0.0, hidden_dropout=0.0)
        swapped = BiLstmStack(layers=[(bwd, fwd)], input_dropout=0.0, hidden_dropout=0.0)
        xs = Tensor(rng.normal(size=(6, 4)).astype(np.float32))
        out = bilstm_forward(xs, stack, "eval")[-1].data
        out_rev = bilstm_forward(flip_rows(Tensor(xs.data)), swapped, "eval")[-1].data
        # Reversing input and swapping directions flips rows and halves.
        assert np.allclose(out_rev[:, :3], out[::-1, 3:], atol=1e-7)
        assert np.allclose(out_rev[:, 3:], out[::-1, :3], atol=1e-7)

    def test_causality(self, rng):
        stack = init_bilstm(4, 3, 1, rng, 0.0, 0.0)
        xs = rng.normal(size=(8, 4)).astype(np.float32)
        j = 4
        perturbed = xs.copy()
        perturbed[j] += 1.0
        base = bilstm_forward(Tensor(xs), stack, "eval")[-1].data
        moved = bilstm_forward(Tensor(perturbed), stack, "eval")[-1].data
        fwd_changed = np.any(base[:, :3] != moved[:, :3], axis=1)
        bwd_changed = np.any(base[:, 3:] != moved[:, 3:], axis=1)
        assert not fwd_changed[:j].any()
        assert fwd_changed[j:].any()
        assert not bwd_changed[j + 1:].any()
        assert bwd_changed[:j + 1].any()

    def test_layer_input_dim_contract(self, rng):
        stack = init_bilstm(5, 4, 2, rng)
        assert stack.layers[1][0].w.shape[0] == 2 * 4


class TestMlp:
    def test_position_wise_purity_under_permutation(self, rng):
        params = init_mlp(5, (7, 4), rng)
        xs = rng.normal(size=(6, 5)).astype(np.float32)
        perm = rng.permutation(6)
        out = mlp_forward(Tensor(xs), params, "eval").data
        out_perm = mlp_forward(Tensor(xs[perm]), params, "eval").data
        assert np.array_equal(out_perm, out[perm])

    def test_duplicate_inputs_bit_identical(self, rng):
        params = init_mlp(4, (6, 3), rng)
        row = rng.normal(size=4).astype(np.float32)
        xs = Tensor(np.vstack([row, rng.normal(size=4).astype(np.float32), row]))
        out = mlp_forward(xs, params, "eval").data
        assert np.array_equal(out[0], out[2])

    def test_zero_weights_pass_bias_through_relu(self, rng):
        params = init_mlp(4, (3,), rng)
        params.weights[0][0].data[:] = 0.0
        params.weights[0][1].data[:] = np.asarray([1.5, -2.0, 0.5])
        out = mlp_forward(Tensor(np.ones((2, 4))), params, "eval").data
        assert np.array_equal(out, np.tile([1.5, 0.0, 0.5], (2, 1)))

    def test_gradients(self, rng):
        params = init_mlp(4, (5, 3), rng, dropout_rate=0.0, dtype=np.float64)
        xs = Tensor(rng.normal(size=(3, 4)), requires_grad=True, dtype=np.float64)
        plist = [xs] + list(params.named("m").values())
        err = grad_check(lambda: sum_all(mlp_forward(xs, params, "eval")), plist)
        assert err < 1e-4

    def test_input_dim_mismatch(self, rng):
        params = init_mlp(4, (5,), rng)
        with pytest.raises(ValueError, match="input dim"):
            mlp_forward(Tensor(np.zeros((2, 7))), params, "eval")
