"""Temporal transformer aggregation: positions, attention, shortcut."""

import numpy as np
import pytest

from ttpp.attention import (
    TTMParams,
    aggregate,
    attention,
    init_ttm_params,
    multi_head,
    positional_encoding,
)
from ttpp.tensor import Parameter, Tensor, grad_check


class TestPositionalEncoding:
    def test_row_zero_alternates(self):
        pe = positional_encoding(4, 10)
        np.testing.assert_allclose(pe[0], [0.0, 1.0] * 5, atol=0)

    def test_first_dimension_is_plain_sine(self):
        pe = positional_encoding(3, 8)
        assert pe[1, 0] == pytest.approx(np.sin(1.0), abs=1e-12)
        assert pe[2, 0] == pytest.approx(np.sin(2.0), abs=1e-12)

    def test_full_table_against_per_entry_oracle(self):
        pe = positional_encoding(8, 16)
        for pos in range(8):
            for i in range(16):
                angle = pos / 10000 ** (i / 16)
                expected = np.sin(angle) if i % 2 == 0 else np.cos(angle)
                assert pe[pos, i] == pytest.approx(expected, abs=1e-12)

    def test_entries_bounded(self):
        pe = positional_encoding(64, 32)
        assert np.all(pe >= -1.0) and np.all(pe <= 1.0)

    def test_rejects_degenerate_dims(self):
        with pytest.raises(ValueError):
            positional_encoding(0, 8)
        with pytest.raises(ValueError):
            positional_encoding(4, 1)


class TestAttention:
    def test_single_memory_row_passes_value_through(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            q = Tensor(rng.normal(size=(1, 8)))
            k = Tensor(rng.normal(size=(1, 8)))
            v = Tensor(rng.normal(size=(1, 8)))
            out, w = attention(q, k, v)
            np.testing.assert_allclose(out.data, v.data)
            assert w.data[0, 0] == pytest.approx(1.0)

    def test_identical_keys_average_values(self):
        rng = np.random.default_rng(1)
        q = Tensor(rng.normal(size=(1, 6)))
        k = Tensor(np.tile(rng.normal(size=(1, 6)), (5, 1)))
        v = Tensor(rng.normal(size=(5, 6)))
        out, _ = attention(q, k, v)
        np.testing.assert_allclose(out.data, v.data.mean(axis=0, keepdims=True), atol=1e-12)

    def test_against_naive_loop_oracle(self):
        rng = np.random.default_rng(2)
        q = rng.normal(size=(1, 8))
        k = rng.normal(size=(7, 8))
        v = rng.normal(size=(7, 8))
        scores = np.array([np.dot(q[0], k[i]) / np.sqrt(8) for i in range(7)])
        e = np.exp(scores - scores.max())
        w = e / e.sum()
        expected = sum(w[i] * v[i] for i in range(7))
        out, weights = attention(Tensor(q), Tensor(k), Tensor(v))
        np.testing.assert_allclose(out.data[0], expected, atol=1e-10)
        np.testing.assert_allclose(weights.data[0], w, atol=1e-10)

    def test_empty_memory_rejected(self):
        q = Tensor(np.zeros((1, 4)))
        empty = Tensor(np.zeros((0, 4)))
        with pytest.raises(ValueError, match="empty memory"):
            attention(q, empty, empty)

    def test_weight_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        _, w = attention(
            Tensor(rng.normal(size=(3, 8))),
            Tensor(rng.normal(size=(6, 8))),
            Tensor(rng.normal(size=(6, 8))),
        )
        np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_output_linear_in_values_for_fixed_weights(self):
        rng = np.random.default_rng(4)
        q = Tensor(rng.normal(size=(1, 8)))
        k = Tensor(rng.normal(size=(5, 8)))
        v = rng.normal(size=(5, 8))
        out1, w1 = attention(q, k, Tensor(v))
        out2, w2 = attention(q, k, Tensor(2 * v))
        np.testing.assert_array_equal(w1.data, w2.data)
        np.testing.assert_allclose(out2.data, 2 * out1.data, rtol=1e-12)


def identity_params(d_m: int) -> TTMParams:
    eye = np.eye(d_m)
    return TTMParams(
        wq=[Parameter("q0", eye)],
        wk=[Parameter("k0", eye)],
        wv=[Parameter("v0", eye)],
        wo=Parameter("o", eye),
    )


class TestMultiHead:
    def test_single_identity_head_reduces_to_attention(self):
        rng = np.random.default_rng(5)
        q = Tensor(rng.normal(size=(1, 6)))
        mem = Tensor(rng.normal(size=(4, 6)))
        out, weights = multi_head(q, mem, identity_params(6))
        expected, ew = attention(q, mem, mem)
        np.testing.assert_allclose(out.data, expected.data, atol=1e-12)
        np.testing.assert_allclose(weights[0], ew.data[0], atol=1e-12)

    @pytest.mark.parametrize("n_heads", [1, 2, 4, 8])
    def test_output_shape(self, n_heads):
        rng = np.random.default_rng(6)
        params = init_ttm_params(16, n_heads, rng)
        out, weights = multi_head(
            Tensor(rng.normal(size=(1, 16))), Tensor(rng.normal(size=(5, 16))), params
        )
        assert out.shape == (1, 16)
        assert weights.shape == (n_heads, 5)

    def test_two_heads_match_per_head_oracle(self):
        rng = np.random.default_rng(7)
        d_m, n = 8, 2
        params = init_ttm_params(d_m, n, rng)
        q = rng.normal(size=(1, d_m))
        mem = rng.normal(size=(5, d_m))
        heads = []
        for i in range(n):
            qi = q @ params.wq[i].value.data
            ki = mem @ params.wk[i].value.data
            vi = mem @ params.wv[i].value.data
            scores = (qi @ ki.T) / np.sqrt(d_m)  # scale uses the model width
            e = np.exp(scores - scores.max())
            w = e / e.sum()
            heads.append(w @ vi)
        expected = np.concatenate(heads, axis=-1) @ params.wo.value.data
        out, _ = multi_head(Tensor(q), Tensor(mem), params)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_heads_must_divide_width(self):
        with pytest.raises(ValueError, match="divide"):
            init_ttm_params(10, 3, np.random.default_rng(0))

    def test_empty_memory_rejected(self):
        params = init_ttm_params(8, 2, np.random.default_rng(8))
        with pytest.raises(ValueError, match="empty memory"):
            multi_head(Tensor(np.zeros((1, 8))), Tensor(np.zeros((0, 8))), params)


class TestAggregate:
    def test_two_chunk_window_attends_fully_to_single_memory(self):
        rng = np.random.default_rng(9)
        params = init_ttm_params(8, 2, rng)
        pe = positional_encoding(2, 8)
        _, weights = aggregate(Tensor(rng.normal(size=(2, 8))), params, pe)
        np.testing.assert_allclose(weights, np.ones((2, 1)), atol=1e-12)

    def test_zero_output_projection_leaves_query(self):
        rng = np.random.default_rng(10)
        params = init_ttm_params(8, 2, rng)
        params.wo.value.data[:] = 0.0
        pe = positional_encoding(4, 8)
        f = rng.normal(size=(4, 8))
        out, _ = aggregate(Tensor(f), params, pe)
        np.testing.assert_allclose(out.data, (f + pe[:4])[3:4], atol=1e-12)

    def test_no_shortcut_variant_drops_query(self):
        rng = np.random.default_rng(11)
        params = init_ttm_params(8, 2, rng)
        params.wo.value.data[:] = 0.0
        pe = positional_encoding(4, 8)
        out, _ = aggregate(Tensor(rng.normal(size=(4, 8))), params, pe, shortcut=False)
        np.testing.assert_allclose(out.data, np.zeros((1, 8)), atol=1e-12)

    def test_weight_rows_sum_to_one(self):
        rng = np.random.default_rng(12)
        params = init_ttm_params(16, 4, rng)
        pe = positional_encoding(8, 16)
        _, weights = aggregate(Tensor(rng.normal(size=(8, 16))), params, pe)
        assert weights.shape == (4, 7)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-9)

    def test_too_short_sequence(self):
        params = init_ttm_params(8, 2, np.random.default_rng(13))
        pe = positional_encoding(8, 8)
        with pytest.raises(ValueError, match="too short"):
            aggregate(Tensor(np.zeros((1, 8))), params, pe)

    def test_memory_permutation_invariance_without_positions(self):
        rng = np.random.default_rng(14)
        params = init_ttm_params(16, 4, rng)
        zero_pe = np.zeros((8, 16))
        f = rng.normal(size=(8, 16))
        base, _ = aggregate(Tensor(f), params, zero_pe)
        for _ in range(5):
            perm = rng.permutation(7)
            shuffled = np.concatenate([f[:7][perm], f[7:]], axis=0)
            out, _ = aggregate(Tensor(shuffled), params, zero_pe)
            np.testing.assert_allclose(out.data, base.data, rtol=0, atol=1e-12)

    def test_joint_permutation_invariance_with_positions(self):
        # permuting memory rows together with their position rows moves
        # labelled content around without changing the attended set
        rng = np.random.default_rng(15)
        params = init_ttm_params(16, 4, rng)
        pe = positional_encoding(8, 16)
        f = rng.normal(size=(8, 16))
        base, _ = aggregate(Tensor(f), params, pe)
        for _ in range(5):
            perm = rng.permutation(7)
            shuffled = np.concatenate([(f[:7] + pe[:7])[perm], f[7:] + pe[7:8]], axis=0)
            out, _ = aggregate(Tensor(shuffled), params, np.zeros((8, 16)))
            np.testing.assert_allclose(out.data, base.data, rtol=0, atol=1e-9)

    def test_order_sensitivity_with_positions(self):
        # with positions attached, plain memory shuffles must change S_t
        rng = np.random.default_rng(16)
        params = init_ttm_params(16, 4, rng)
        pe = positional_encoding(8, 16)
        f = rng.normal(size=(8, 16))
        base, _ = aggregate(Tensor(f), params, pe)
        shuffled = np.concatenate([f[:7][::-1], f[7:]], axis=0)
        out, _ = aggregate(Tensor(shuffled), params, pe)
        assert np.abs(out.data - base.data).max() > 1e-6

    def test_gradient(self):
        rng = np.random.default_rng(17)
        params = init_ttm_params(8, 2, rng)
        pe = positional_encoding(4, 8)
        f = rng.normal(size=(4, 8))
        cost = Tensor(rng.normal(size=(1, 8)))

        def loss(*tensors):
            out, _ = aggregate(Tensor(f), params, pe)
            return (out * cost).sum()

        err = grad_check(loss, [p.value for p in params.parameters()])
        assert err < 1e-4

    def test_input_gradient(self):
        rng = np.random.default_rng(18)
        params = init_ttm_params(8, 2, rng)
        pe = positional_encoding(4, 8)
        cost = Tensor(rng.normal(size=(1, 8)))

        def loss(t):
            out, _ = aggregate(t, params, pe)
            return (out * cost).sum()

        assert grad_check(loss, [Tensor(rng.normal(size=(4, 8)))]) < 1e-4
