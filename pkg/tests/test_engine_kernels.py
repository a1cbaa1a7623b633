"""Quantized kernels vs independent integer oracles."""

import numpy as np
import pytest

from helpers import (
    ORACLES,
    oracle_requantize,
    random_small_graph,
    weighted_layer,
)
from tinylift.engine import (
    Activation,
    LayerDesc,
    LayerKind,
    Padding,
    QuantParams,
    QuantTensor,
    avg_pool2d,
    conv2d,
    depthwise_conv2d,
    fully_connected,
    requantize,
    reshape,
    run_layer,
    softmax_int8,
)
from tinylift.engine.kernels import SOFTMAX_QPARAMS, _requantize_array
from tinylift.errors import ShapeMismatch


class TestRequantize:
    def test_zero_acc_gives_zero_point(self):
        assert requantize(0, 1 << 30, 4, 17) == 17

    def test_saturates_high(self):
        assert requantize(2 ** 31 - 1, 1 << 30, 0, 0) == 127

    def test_saturates_low(self):
        assert requantize(-(2 ** 31) + 1, 1 << 30, 0, 0) == -128

    def test_half_rounds_away_from_zero(self):
        # acc * 2^30 / 2^31 = acc/2: exact halves for odd acc
        assert requantize(3, 1 << 30, 0, 0) == 2    # 1.5 -> 2
        assert requantize(-3, 1 << 30, 0, 0) == -2  # -1.5 -> -2
        assert requantize(5, 1 << 30, 0, 0) == 3    # 2.5 -> 3

    def test_10000_random_triples_match_big_integer_oracle(self):
        rng = np.random.default_rng(101)
        accs = rng.integers(-(2 ** 31), 2 ** 31, size=10_000)
        mants = rng.integers(2 ** 30, 2 ** 31, size=10_000)
        shifts = rng.integers(0, 32, size=10_000)
        zps = rng.integers(-128, 128, size=10_000)
        for acc, mant, shift, zp in zip(accs, mants, shifts, zps):
            got = requantize(int(acc), int(mant), int(shift), int(zp))
            want = oracle_requantize(int(acc), int(mant), int(shift), int(zp))
            assert got == want, (acc, mant, shift, zp)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(103)
        accs = rng.integers(-(2 ** 31), 2 ** 31, size=2000).astype(np.int64)
        mant, shift, zp = 1_500_000_001, 7, -3
        got = _requantize_array(accs, mant, shift, zp)
        want = np.array([requantize(int(a), mant, shift, zp) for a in accs])
        np.testing.assert_array_equal(got, want)


class TestConv2d:
    def test_identity_kernel(self):
        # real weight 1.0 stored as q=2 at scale 0.5 so the multiplier is 1/2
        qp = QuantParams(0.1, 3)
        x = QuantTensor((1, 4, 4, 1),
                        np.arange(16, dtype=np.int8).reshape(1, 4, 4, 1) - 8, qp)
        layer = weighted_layer(LayerKind.CONV2D, np.full((1, 1, 1, 1), 2, np.int8),
                               0.5, 0, in_scale=0.1, out_scale=0.1, out_zp=3)
        out = conv2d(x, layer)
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_weights_bias_only(self):
        # bias 40 at scale in*w = 0.05 is real 2.0; out grid 0.2 -> q = 10 + zp
        qp = QuantParams(0.1, 0)
        rng = np.random.default_rng(0)
        x = QuantTensor((1, 3, 3, 2), rng.integers(-128, 128, (1, 3, 3, 2)).astype(np.int8), qp)
        bias = np.array([40, -40], dtype=np.int32)
        layer = weighted_layer(LayerKind.CONV2D, np.zeros((1, 1, 2, 2), np.int8),
                               0.5, 0, in_scale=0.1, out_scale=0.2, out_zp=5, bias=bias)
        out = conv2d(x, layer)
        assert (out.data[..., 0] == 15).all()   # 10 + 5
        assert (out.data[..., 1] == -5).all()   # -10 + 5

    def test_spec_shape_matches_oracle(self):
        rng = np.random.default_rng(42)
        qp = QuantParams(0.08, -4)
        x = QuantTensor((1, 5, 5, 2), rng.integers(-128, 128, (1, 5, 5, 2)).astype(np.int8), qp)
        layer = weighted_layer(LayerKind.CONV2D,
                               rng.integers(-127, 128, (3, 3, 2, 4)).astype(np.int8),
                               0.02, 3, in_scale=0.08, out_scale=0.5, out_zp=-1,
                               bias=rng.integers(-500, 500, 4).astype(np.int32),
                               stride=(2, 2), padding=Padding.SAME,
                               activation=Activation.RELU)
        np.testing.assert_array_equal(conv2d(x, layer).data, ORACLES[LayerKind.CONV2D](x, layer))

    @pytest.mark.parametrize("padding", [Padding.SAME, Padding.VALID])
    @pytest.mark.parametrize("stride", [1, 2])
    def test_padding_stride_grid_matches_oracle(self, padding, stride):
        rng = np.random.default_rng(stride * 10 + padding)
        qp = QuantParams(0.05, 7)
        x = QuantTensor((1, 6, 7, 3), rng.integers(-128, 128, (1, 6, 7, 3)).astype(np.int8), qp)
        layer = weighted_layer(LayerKind.CONV2D,
                               rng.integers(-127, 128, (2, 3, 3, 2)).astype(np.int8),
                               0.03, -5, in_scale=0.05, out_scale=0.4, out_zp=2,
                               bias=rng.integers(-200, 200, 2).astype(np.int32),
                               stride=(stride, stride), padding=padding)
        np.testing.assert_array_equal(conv2d(x, layer).data, ORACLES[LayerKind.CONV2D](x, layer))

    def test_shape_mismatch(self):
        qp = QuantParams(0.1, 0)
        x = QuantTensor((1, 4, 4, 2), np.zeros((1, 4, 4, 2), np.int8), qp)
        layer = weighted_layer(LayerKind.CONV2D, np.zeros((1, 1, 3, 1), np.int8),
                               0.5, 0, in_scale=0.1, out_scale=0.1, out_zp=0)
        with pytest.raises(ShapeMismatch):
            conv2d(x, layer)


class TestDepthwise:
    def test_per_channel_identity(self):
        qp = QuantParams(0.2, -7)
        rng = np.random.default_rng(1)
        x = QuantTensor((1, 4, 4, 3), rng.integers(-128, 128, (1, 4, 4, 3)).astype(np.int8), qp)
        layer = weighted_layer(LayerKind.DEPTHWISE_CONV2D, np.full((1, 1, 3), 2, np.int8),
                               0.5, 0, in_scale=0.2, out_scale=0.2, out_zp=-7)
        np.testing.assert_array_equal(depthwise_conv2d(x, layer).data, x.data)

    def test_channel_independence(self):
        rng = np.random.default_rng(2)
        qp = QuantParams(0.1, 0)
        data = rng.integers(-128, 128, (1, 5, 5, 2)).astype(np.int8)
        w = rng.integers(-127, 128, (3, 3, 2)).astype(np.int8)
        layer = weighted_layer(LayerKind.DEPTHWISE_CONV2D, w, 0.04, 0,
                               in_scale=0.1, out_scale=0.6, out_zp=0)
        full = depthwise_conv2d(QuantTensor((1, 5, 5, 2), data, qp), layer)
        zeroed = data.copy()
        zeroed[..., 1] = 0
        half = depthwise_conv2d(QuantTensor((1, 5, 5, 2), zeroed, qp), layer)
        np.testing.assert_array_equal(full.data[..., 0], half.data[..., 0])

    def test_random_matches_oracle(self):
        rng = np.random.default_rng(3)
        qp = QuantParams(0.07, 11)
        x = QuantTensor((1, 6, 5, 2), rng.integers(-128, 128, (1, 6, 5, 2)).astype(np.int8), qp)
        layer = weighted_layer(LayerKind.DEPTHWISE_CONV2D,
                               rng.integers(-127, 128, (3, 2, 2)).astype(np.int8),
                               0.05, 2, in_scale=0.07, out_scale=0.9, out_zp=-9,
                               bias=rng.integers(-300, 300, 2).astype(np.int32),
                               stride=(2, 1), padding=Padding.VALID,
                               activation=Activation.RELU6)
        np.testing.assert_array_equal(depthwise_conv2d(x, layer).data,
                                      ORACLES[LayerKind.DEPTHWISE_CONV2D](x, layer))


class TestFullyConnected:
    def test_identity_matrix_passthrough(self):
        qp = QuantParams(0.1, 4)
        x = QuantTensor((1, 6), np.array([[-50, -3, 0, 9, 77, 127]], np.int8), qp)
        w = (np.eye(6) * 2).astype(np.int8)
        layer = weighted_layer(LayerKind.FULLY_CONNECTED, w, 0.5, 0,
                               in_scale=0.1, out_scale=0.1, out_zp=4)
        np.testing.assert_array_equal(fully_connected(x, layer).data, x.data)

    def test_zero_input_gives_quantized_bias(self):
        qp = QuantParams(0.1, 0)
        x = QuantTensor((1, 4), np.zeros((1, 4), np.int8), qp)
        bias = np.array([100, -100, 0], dtype=np.int32)  # real 5.0 / -5.0 / 0
        layer = weighted_layer(LayerKind.FULLY_CONNECTED,
                               np.ones((4, 3), np.int8), 0.5, 1,  # (q - 1) = 0 weights
                               in_scale=0.1, out_scale=0.5, out_zp=2, bias=bias)
        out = fully_connected(x, layer)
        assert out.data.tolist() == [[12, -8, 2]]  # 5.0/0.5 + 2 etc.

    def test_random_16_to_6_matches_oracle(self):
        rng = np.random.default_rng(4)
        qp = QuantParams(0.03, -17)
        x = QuantTensor((1, 16), rng.integers(-128, 128, (1, 16)).astype(np.int8), qp)
        layer = weighted_layer(LayerKind.FULLY_CONNECTED,
                               rng.integers(-127, 128, (16, 6)).astype(np.int8),
                               0.02, -3, in_scale=0.03, out_scale=0.05, out_zp=6,
                               bias=rng.integers(-1000, 1000, 6).astype(np.int32))
        np.testing.assert_array_equal(fully_connected(x, layer).data,
                                      ORACLES[LayerKind.FULLY_CONNECTED](x, layer))

    def test_flattens_4d_input(self):
        rng = np.random.default_rng(5)
        qp = QuantParams(0.1, 0)
        x4 = QuantTensor((1, 2, 2, 2), rng.integers(-128, 128, (1, 2, 2, 2)).astype(np.int8), qp)
        x2 = QuantTensor((1, 8), x4.data.reshape(1, 8), qp)
        layer = weighted_layer(LayerKind.FULLY_CONNECTED,
                               rng.integers(-127, 128, (8, 3)).astype(np.int8),
                               0.05, 0, in_scale=0.1, out_scale=0.4, out_zp=0)
        np.testing.assert_array_equal(fully_connected(x4, layer).data,
                                      fully_connected(x2, layer).data)


class TestAvgPool:
    def test_constant_field(self):
        qp = QuantParams(0.1, 5)
        layer = LayerDesc(kind=LayerKind.AVG_POOL2D, out_qparams=qp)
        x = QuantTensor((1, 3, 3, 2), np.full((1, 3, 3, 2), -42, np.int8), qp)
        out = avg_pool2d(x, layer)
        assert out.shape == (1, 1, 1, 2)
        assert (out.data == -42).all()

    def test_round_half_away(self):
        qp = QuantParams(0.1, 0)
        layer = LayerDesc(kind=LayerKind.AVG_POOL2D, out_qparams=qp)
        data = np.array([1, 2, 0, 0], np.int8).reshape(1, 2, 2, 1)  # mean 0.75 -> 1
        assert avg_pool2d(QuantTensor((1, 2, 2, 1), data, qp), layer).data.reshape(()) == 1
        data = np.array([1, 1, 0, 0], np.int8).reshape(1, 2, 2, 1)  # mean 0.5 -> 1
        assert avg_pool2d(QuantTensor((1, 2, 2, 1), data, qp), layer).data.reshape(()) == 1
        data = np.array([-1, -1, 0, 0], np.int8).reshape(1, 2, 2, 1)  # mean -0.5 -> -1
        assert avg_pool2d(QuantTensor((1, 2, 2, 1), data, qp), layer).data.reshape(()) == -1


class TestSoftmax:
    def _layer(self):
        return LayerDesc(kind=LayerKind.SOFTMAX, out_qparams=SOFTMAX_QPARAMS)

    def test_equal_logits_sum_to_one(self):
        qp = QuantParams(0.2, 0)
        x = QuantTensor((1, 6), np.full((1, 6), 31, np.int8), qp)
        out = softmax_int8(x, self._layer())
        assert len(set(out.data.reshape(-1).tolist())) == 1
        dequant = (out.data.astype(np.float64) + 128) / 256.0
        assert abs(dequant.sum() - 1.0) <= 6.0 / 256.0

    def test_dominant_logit_saturates(self):
        qp = QuantParams(0.5, 0)
        x = QuantTensor((1, 6), np.array([[-100, -100, 120, -100, -100, -100]], np.int8), qp)
        out = softmax_int8(x, self._layer()).data.reshape(-1)
        assert out[2] == 127
        assert (out[[0, 1, 3, 4, 5]] == -127).all()

    def test_scores_stay_in_reportable_range(self):
        rng = np.random.default_rng(6)
        qp = QuantParams(0.11, -5)
        for _ in range(50):
            x = QuantTensor((1, 6), rng.integers(-128, 128, (1, 6)).astype(np.int8), qp)
            out = softmax_int8(x, self._layer()).data
            assert out.min() >= -127 and out.max() <= 127

    def test_invariant_under_common_offset(self):
        qp = QuantParams(0.1, 0)
        base = np.array([[10, -4, 25, 0, -60, 7]], np.int8)
        a = softmax_int8(QuantTensor((1, 6), base, qp), self._layer()).data
        b = softmax_int8(QuantTensor((1, 6), base + 30, qp), self._layer()).data
        np.testing.assert_array_equal(a, b)

    def test_close_to_float_softmax(self):
        rng = np.random.default_rng(7)
        qp = QuantParams(0.04, 3)
        for _ in range(20):
            x = QuantTensor((1, 4), rng.integers(-128, 128, (1, 4)).astype(np.int8), qp)
            got = (softmax_int8(x, self._layer()).data.astype(np.float64) + 128) / 256.0
            logits = x.dequantize().reshape(-1)
            e = np.exp(logits - logits.max())
            want = e / e.sum()
            assert np.abs(got.reshape(-1) - want).max() <= 1.5 / 256.0


class TestReshape:
    def test_flatten_metadata_only(self):
        qp = QuantParams(0.1, 0)
        rng = np.random.default_rng(8)
        data = rng.integers(-128, 128, (1, 3, 4, 2)).astype(np.int8)
        layer = LayerDesc(kind=LayerKind.RESHAPE, out_qparams=qp)
        out = reshape(QuantTensor((1, 3, 4, 2), data, qp), layer)
        assert out.shape == (1, 24)
        np.testing.assert_array_equal(out.data.reshape(-1), data.reshape(-1))


class TestRandomGraphsLayerwise:
    def test_weighted_layers_bit_exact_vs_oracles(self):
        rng = np.random.default_rng(1234)
        for _ in range(25):
            graph, x = random_small_graph(rng)
            current = x
            for layer in graph.layers:
                out = run_layer(current, layer)
                if layer.kind in ORACLES:
                    want = ORACLES[layer.kind](current, layer)
                    np.testing.assert_array_equal(out.data, want,
                                                  err_msg=f"{graph.name} {layer.kind}")
                current = out
