"""Fusion stage tests: concat order, residual CNN, CBAM gates, attention pooling."""

import numpy as np
import numpy.testing as npt
import pytest

from mmsent import fusion as fz
from mmsent import image as im
from mmsent import tensor as tz
from mmsent.fusion import (
    AttentionPoolParams,
    CbamParams,
    FusedSequence,
    FusionCnnParams,
    FusionParams,
)
from mmsent.tensor import ShapeError, Tensor, grad_check


def sig(v):
    return 1.0 / (1.0 + np.exp(-v))


class TestConcatModalities:
    def test_row_counts(self):
        rng = np.random.default_rng(0)
        out = fz.concat_modalities(Tensor(rng.normal(size=(12, 32))), Tensor(rng.normal(size=(16, 32))))
        assert out.shape == (28, 32)

    def test_slicing_recovers_text_exactly(self):
        rng = np.random.default_rng(1)
        t = rng.normal(size=(12, 32))
        out = fz.concat_modalities(Tensor(t), Tensor(rng.normal(size=(16, 32))))
        assert np.array_equal(tz.slice_axis(out, 0, 0, 12).data, t)

    def test_image_rows_follow_text_rows(self):
        rng = np.random.default_rng(2)
        m = rng.normal(size=(16, 32))
        out = fz.concat_modalities(Tensor(rng.normal(size=(12, 32))), Tensor(m))
        npt.assert_array_equal(out.data[12], m[0])

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            fz.concat_modalities(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


class TestFusionCnn:
    def test_zero_params_identity(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(6, 4))
        p = FusionCnnParams(kernel=Tensor(np.zeros((3, 4, 4))), bias=Tensor(np.zeros(4)))
        out = fz.fusion_cnn(Tensor(x), p)
        assert np.array_equal(out.data, x)

    def test_shape_preserved(self):
        rng = np.random.default_rng(4)
        p = FusionCnnParams.init(rng, 32)
        out = fz.fusion_cnn(Tensor(rng.normal(size=(28, 32))), p)
        assert out.shape == (28, 32)

    def test_kernel_gradient(self):
        rng = np.random.default_rng(5)
        p = FusionCnnParams.init(rng, 4)
        x = Tensor(rng.normal(size=(6, 4)))
        w = Tensor(rng.normal(size=(6, 4)))
        report = grad_check(lambda k, b: tz.sum_all(tz.mul(fz.fusion_cnn(x, p), w)),
                            [p.kernel, p.bias])
        assert report.max_rel_err < 1e-5


class TestCbamChannel:
    def test_zero_mlp_halves_input(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 8))
        p = CbamParams(w0=Tensor(np.zeros((8, 2))), w1=Tensor(np.zeros((2, 8))),
                       spatial_kernel=Tensor(np.zeros((7, 2, 1))), spatial_bias=Tensor(np.zeros(1)),
                       reduction=4)
        scaled, weights = fz.cbam_channel(Tensor(x), p)
        npt.assert_allclose(weights.data, np.full(8, 0.5), atol=1e-15)
        npt.assert_allclose(scaled.data, x / 2, atol=1e-15)

    def test_constant_sequence_doubles_mlp_response(self):
        # constant rows make avg-pool equal max-pool, so the gate is sigmoid(2*MLP(v))
        rng = np.random.default_rng(7)
        p = CbamParams.init(rng, 8, 4)
        v = rng.normal(size=8)
        x = np.tile(v, (5, 1))
        _, weights = fz.cbam_channel(Tensor(x), p)
        mlp = np.maximum(v @ p.w0.data, 0.0) @ p.w1.data
        npt.assert_allclose(weights.data, sig(2.0 * mlp), atol=1e-12)

    def test_random_against_naive_per_channel_loop(self):
        rng = np.random.default_rng(8)
        p = CbamParams.init(rng, 8, 4)
        x = rng.normal(size=(6, 8))
        scaled, weights = fz.cbam_channel(Tensor(x), p)
        avg, mx = x.mean(axis=0), x.max(axis=0)
        mlp = lambda v: np.maximum(v @ p.w0.data, 0.0) @ p.w1.data
        want_w = sig(mlp(avg) + mlp(mx))
        want_scaled = np.empty_like(x)
        for c in range(8):
            want_scaled[:, c] = x[:, c] * want_w[c]
        npt.assert_allclose(weights.data, want_w, atol=1e-12)
        npt.assert_allclose(scaled.data, want_scaled, atol=1e-12)

    def test_reduction_must_divide_width(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ShapeError):
            CbamParams.init(rng, 8, 3)


class TestCbamSpatial:
    def test_zero_conv_halves_input(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(5, 8))
        p = CbamParams(w0=Tensor(np.zeros((8, 2))), w1=Tensor(np.zeros((2, 8))),
                       spatial_kernel=Tensor(np.zeros((7, 2, 1))), spatial_bias=Tensor(np.zeros(1)),
                       reduction=4)
        scaled, weights = fz.cbam_spatial(Tensor(x), p)
        npt.assert_allclose(weights.data, np.full(5, 0.5), atol=1e-15)
        npt.assert_allclose(scaled.data, x / 2, atol=1e-15)

    def test_weight_length_matches_default_fused_length(self):
        rng = np.random.default_rng(11)
        p = CbamParams.init(rng, 32, 4)
        _, weights = fz.cbam_spatial(Tensor(rng.normal(size=(28, 32))), p)
        assert weights.shape == (28,)

    def test_random_against_naive_transcription(self):
        rng = np.random.default_rng(12)
        p = CbamParams.init(rng, 8, 4)
        x = rng.normal(size=(9, 8))
        scaled, weights = fz.cbam_spatial(Tensor(x), p)
        pooled = np.stack([x.mean(axis=1), x.max(axis=1)], axis=1)
        pad = 3
        padded = np.zeros((9 + 6, 2))
        padded[pad:pad + 9] = pooled
        scores = np.zeros(9)
        for l in range(9):
            acc = p.spatial_bias.data[0]
            for j in range(7):
                acc += padded[l + j] @ p.spatial_kernel.data[j, :, 0]
            scores[l] = acc
        want_w = sig(scores)
        npt.assert_allclose(weights.data, want_w, atol=1e-12)
        npt.assert_allclose(scaled.data, x * want_w[:, None], atol=1e-12)


class TestCbam:
    def test_zero_params_quarter_input(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(6, 8))
        p = CbamParams(w0=Tensor(np.zeros((8, 2))), w1=Tensor(np.zeros((2, 8))),
                       spatial_kernel=Tensor(np.zeros((7, 2, 1))), spatial_bias=Tensor(np.zeros(1)),
                       reduction=4)
        out = fz.cbam(Tensor(x), p)
        npt.assert_allclose(out.data, x / 4, atol=1e-15)

    def test_strict_contraction_on_random_inputs(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            p = CbamParams.init(rng, 8, 4)
            x = rng.normal(size=(rng.integers(2, 12), 8))
            out = fz.cbam(Tensor(x), p).data
            assert np.all(np.abs(out) <= np.abs(x))
            nz = x != 0
            assert np.all(np.abs(out[nz]) < np.abs(x[nz]))

    def test_disabled_is_bit_exact_identity(self):
        rng = np.random.default_rng(15)
        p = CbamParams.init(rng, 8, 4)
        x = Tensor(rng.normal(size=(6, 8)))
        out = fz.cbam(x, p, enabled=False)
        assert out is x

    def test_gradient(self):
        rng = np.random.default_rng(16)
        p = CbamParams.init(rng, 8, 4)
        x = Tensor(rng.normal(size=(6, 8)), requires_grad=True)
        w = Tensor(rng.normal(size=(6, 8)))
        report = grad_check(lambda x: tz.sum_all(tz.mul(fz.cbam(x, p), w)), [x])
        assert report.max_rel_err < 1e-4


class TestFuse:
    def test_shape_contract(self):
        rng = np.random.default_rng(17)
        p = FusionParams.init(rng, 32, 4, 2, 4)
        out = fz.fuse(Tensor(rng.normal(size=(12, 32))), Tensor(rng.normal(size=(16, 32))), p)
        assert out.tokens.shape == (28, 32)
        assert out.length == 28 and out.width == 32

    def test_ablated_pipeline_equals_plain_transformer(self):
        rng = np.random.default_rng(18)
        p = FusionParams.init(rng, 8, 2, 2, 4)
        t = Tensor(rng.normal(size=(3, 8)))
        m = Tensor(rng.normal(size=(4, 8)))
        got = fz.fuse(t, m, p, use_cnn=False, use_cbam=False).tokens.data
        x = fz.concat_modalities(t, m)
        for block in p.blocks:
            x = im.transformer_block(x, block)
        assert np.array_equal(got, x.data)

    def test_zeroed_cnn_with_cbam_off_also_reduces(self):
        rng = np.random.default_rng(19)
        p = FusionParams.init(rng, 8, 2, 1, 4)
        p.cnn.kernel.data[:] = 0.0
        p.cnn.bias.data[:] = 0.0
        t = Tensor(rng.normal(size=(3, 8)))
        m = Tensor(rng.normal(size=(4, 8)))
        got = fz.fuse(t, m, p, use_cnn=True, use_cbam=False).tokens.data
        want = im.transformer_block(fz.concat_modalities(t, m), p.blocks[0]).data
        assert np.array_equal(got, want)

    def test_end_to_end_gradient_to_text_input(self):
        rng = np.random.default_rng(20)
        p = FusionParams.init(rng, 8, 2, 1, 4)
        # unit-gain/zero-bias output norms make every row of sum(F') exactly
        # constant; randomize the affine part so the objective depends on t
        p.blocks[-1].ln2_gain.data[:] = rng.normal(size=8)
        p.blocks[-1].ln2_bias.data[:] = rng.normal(size=8)
        t = Tensor(rng.normal(size=(3, 8)), requires_grad=True)
        m = Tensor(rng.normal(size=(4, 8)))
        report = grad_check(lambda t: tz.sum_all(fz.fuse(t, m, p).tokens), [t])
        assert report.max_rel_err < 1e-4


class TestAttentionPool:
    def test_single_token(self):
        rng = np.random.default_rng(21)
        p = AttentionPoolParams.init(rng, 8, 6)
        f = FusedSequence(Tensor(rng.normal(size=(1, 8))))
        pooled, alpha = fz.attention_pool_with_weights(f, p)
        npt.assert_array_equal(alpha.data, [1.0])
        # with one token the pooled vector is that row; check the output map on it
        row = f.tokens.data[0]
        pre = row @ p.w_r.data + p.b_r.data
        npt.assert_allclose(pooled.vector.data,
                            0.5 * pre * (1 + np.tanh(np.sqrt(2 / np.pi) * (pre + 0.044715 * pre ** 3))),
                            atol=1e-12)

    def test_identical_tokens_pool_to_that_token(self):
        rng = np.random.default_rng(22)
        p = AttentionPoolParams.init(rng, 8, 6)
        row = rng.normal(size=8)
        f = FusedSequence(Tensor(np.tile(row, (5, 1))))
        single = fz.attention_pool(FusedSequence(Tensor(row[None, :])), p)
        pooled = fz.attention_pool(f, p)
        npt.assert_allclose(pooled.vector.data, single.vector.data, atol=1e-12)

    def test_alpha_is_stochastic_and_pooling_matches_naive_sum(self):
        rng = np.random.default_rng(23)
        p = AttentionPoolParams.init(rng, 8, 6)
        x = rng.normal(size=(7, 8))
        pooled, alpha = fz.attention_pool_with_weights(FusedSequence(Tensor(x)), p)
        assert abs(alpha.data.sum() - 1.0) <= 1e-12
        scores = np.tanh(x @ p.w_a.data) @ p.v_a.data
        e = np.exp(scores - scores.max())
        want_alpha = e / e.sum()
        want_pooled = sum(want_alpha[i] * x[i] for i in range(7))
        npt.assert_allclose(alpha.data, want_alpha, atol=1e-12)
        pre = want_pooled @ p.w_r.data + p.b_r.data
        want = 0.5 * pre * (1 + np.tanh(np.sqrt(2 / np.pi) * (pre + 0.044715 * pre ** 3)))
        npt.assert_allclose(pooled.vector.data, want, atol=1e-12)

    def test_gradient(self):
        rng = np.random.default_rng(24)
        p = AttentionPoolParams.init(rng, 8, 6)
        x = Tensor(rng.normal(size=(5, 8)), requires_grad=True)
        w = Tensor(rng.normal(size=8))
        report = grad_check(
            lambda x: tz.sum_all(tz.mul(fz.attention_pool(FusedSequence(x), p).vector, w)), [x]
        )
        assert report.max_rel_err < 1e-4
